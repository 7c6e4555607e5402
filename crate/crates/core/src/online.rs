//! Online adaptation of fitted classifiers from their own fused predictions.
//!
//! Appending a row `a` to a design `A` (shape `l×p`, pseudo-inverse `A⁺`
//! shape `p×l`) updates the pseudo-inverse without refactorizing:
//!
//! ```text
//! Dᵀ = a·A⁺            (1×l)
//! C  = a − Dᵀ·A        (1×p)
//! B  = Cᵀ/‖C‖²                    if C ≠ 0
//!    = A⁺·D / (1 + Dᵀ·D)          if C = 0
//! [A; a]⁺ = [A⁺ − B·Dᵀ | B]
//! W' = W + B·(y − a·W)
//! ```
//!
//! `C ≠ 0` is decided against a tolerance, since a floating-point `C` is
//! never exactly zero.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bls::{scores_to_belief, BlsClassifier};
use crate::er_fusion::{fuse, BeliefDistribution, EvidenceWeights};
use crate::error::{Error, Result};
use crate::numkernel::{self, Matrix};

/// Relative tolerance of the `C ≠ 0` test used by [`default_c_tol`].
pub const DEFAULT_C_TOL_REL: f64 = 1e-10;

/// Relative `C ≠ 0` tolerance used by [`OnlineConfig::default`].
///
/// A ridge-fitted pseudo-inverse leaves `C ≈ 1e-10·‖a‖` even for rows well
/// inside the row space of a tall design, which would trip the `1e-10`
/// primitive default into the rank-increasing branch.
pub const DEFAULT_STREAM_C_TOL_REL: f64 = 1e-6;

/// `1e-10 · max(1, ‖row‖∞)`.
pub fn default_c_tol(row: &[f64]) -> f64 {
    scaled_c_tol(DEFAULT_C_TOL_REL, row)
}

fn scaled_c_tol(rel: f64, row: &[f64]) -> f64 {
    rel * row.iter().fold(1.0_f64, |m, v| m.max(v.abs()))
}

/// Which branch of the pseudo-inverse update a classifier took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// The new row left the current row space.
    CNonzero,
    /// The new row was (numerically) inside the current row space.
    CZero,
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateIntermediates {
    /// `Dᵀ = a·A⁺`, one entry per pre-update design row.
    pub d_row: Vec<f64>,
    /// `C = a − Dᵀ·A`, one entry per design column.
    pub c_row: Vec<f64>,
    /// `B`, the column appended to the pseudo-inverse.
    pub b_col: Vec<f64>,
    pub branch: Branch,
}

/// Append `new_row` to `design` and return the stacked design, its updated
/// pseudo-inverse, and the update intermediates.
pub fn greville_append(
    design: &Matrix,
    design_pinv: &Matrix,
    new_row: &[f64],
    c_tol: f64,
) -> Result<(Matrix, Matrix, UpdateIntermediates)> {
    let mut design = design.clone();
    let mut pinv = design_pinv.clone();
    let inter = greville_append_in_place(&mut design, &mut pinv, new_row, c_tol)?;
    Ok((design, pinv, inter))
}

pub fn greville_append_in_place(
    design: &mut Matrix,
    design_pinv: &mut Matrix,
    new_row: &[f64],
    c_tol: f64,
) -> Result<UpdateIntermediates> {
    let (l, p) = design.shape();
    if design_pinv.shape() != (p, l) || new_row.len() != p {
        return Err(Error::Shape {
            op: "greville_append",
            left: design.shape(),
            right: design_pinv.shape(),
        });
    }
    if !(c_tol > 0.0) {
        return Err(Error::Argument(format!("c_tol must be > 0, got {c_tol}")));
    }
    numkernel::ensure_finite_slice("greville_append", new_row)?;

    let d_row = design_pinv.vecmat(new_row)?;
    let projected = design.vecmat(&d_row)?;
    let c_row: Vec<f64> = new_row.iter().zip(&projected).map(|(a, b)| a - b).collect();
    let c_inf = c_row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let (b_col, branch) = if c_inf > c_tol {
        let norm2 = numkernel::dot(&c_row, &c_row);
        (c_row.iter().map(|c| c / norm2).collect(), Branch::CNonzero)
    } else {
        let scale = 1.0 + numkernel::dot(&d_row, &d_row);
        let b: Vec<f64> = design_pinv
            .matvec(&d_row)?
            .iter()
            .map(|v| v / scale)
            .collect();
        (b, Branch::CZero)
    };

    design_pinv.sub_outer(&b_col, &d_row)?;
    design_pinv.push_col(&b_col)?;
    design.push_row(new_row)?;
    Ok(UpdateIntermediates {
        d_row,
        c_row,
        b_col,
        branch,
    })
}

/// `W + B·(target − row·W)`.
pub fn weight_update(
    w: &Matrix,
    new_feature_row: &[f64],
    target: &[f64],
    inter: &UpdateIntermediates,
) -> Result<Matrix> {
    let mut w = w.clone();
    weight_update_in_place(&mut w, new_feature_row, target, inter)?;
    Ok(w)
}

pub fn weight_update_in_place(
    w: &mut Matrix,
    new_feature_row: &[f64],
    target: &[f64],
    inter: &UpdateIntermediates,
) -> Result<()> {
    if new_feature_row.len() != w.rows()
        || target.len() != w.cols()
        || inter.b_col.len() != w.rows()
    {
        return Err(Error::Shape {
            op: "weight_update",
            left: w.shape(),
            right: (new_feature_row.len(), target.len()),
        });
    }
    let predicted = w.vecmat(new_feature_row)?;
    // sub_outer with the negated residual adds B·(target − prediction)
    let neg_residual: Vec<f64> = predicted.iter().zip(target).map(|(p, t)| p - t).collect();
    w.sub_outer(&inter.b_col, &neg_residual)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub class: usize,
    pub onehot: Vec<f64>,
    /// Fused belief of the chosen class.
    pub source_confidence: f64,
}

/// One-hot label on the most believed class (lowest index wins ties).
pub fn pseudo_label(fused: &BeliefDistribution) -> PseudoLabel {
    let class = fused.argmax();
    let mut onehot = vec![0.0; fused.n_classes()];
    onehot[class] = 1.0;
    PseudoLabel {
        class,
        onehot,
        source_confidence: fused.beliefs[class].clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineConfig {
    /// Minimum fused confidence for a pseudo-label to be used as a target.
    pub gate: f64,
    /// Relative tolerance of the `C ≠ 0` test, scaled by `max(1, ‖row‖∞)`.
    pub c_tol_rel: f64,
    /// Stop updating once any design reaches this many rows.
    pub max_design_rows: Option<usize>,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            gate: 0.0,
            c_tol_rel: DEFAULT_STREAM_C_TOL_REL,
            max_design_rows: None,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=f64::MAX).contains(&self.gate) {
            return Err(Error::Config(format!(
                "gate must be >= 0, got {}",
                self.gate
            )));
        }
        if !(self.c_tol_rel > 0.0) {
            return Err(Error::Config(format!(
                "c_tol_rel must be > 0, got {}",
                self.c_tol_rel
            )));
        }
        Ok(())
    }

    /// A gate above 1 can never be met: a frozen, predict-only stream.
    pub fn frozen() -> Self {
        OnlineConfig {
            gate: 1.01,
            ..OnlineConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Updated,
    /// Confidence below the gate.
    Gated,
    /// Design row cap reached.
    Frozen,
    /// Fusion failed with total conflict; no prediction, no update.
    Conflict,
    /// Prediction-only scheme (no fusion, no updates).
    Static,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub fused: BeliefDistribution,
    pub label: PseudoLabel,
    pub status: StepStatus,
    pub branches: Vec<Branch>,
}

/// Predict one sample with every classifier, fuse, and (gate permitting) feed
/// the pseudo-label back into every classifier.
///
/// On error nothing is modified.
pub fn online_step(
    classifiers: &mut [BlsClassifier],
    weights: &[EvidenceWeights],
    x: &[f64],
    cfg: &OnlineConfig,
) -> Result<StepOutcome> {
    if classifiers.is_empty() || classifiers.len() != weights.len() {
        return Err(Error::Argument(format!(
            "online_step: {} classifiers but {} weight vectors",
            classifiers.len(),
            weights.len()
        )));
    }
    let rows = classifiers
        .iter()
        .map(|c| c.design_row(x))
        .collect::<Result<Vec<_>>>()?;
    let evidence = classifiers
        .iter()
        .zip(&rows)
        .zip(weights)
        .map(|((c, row), w)| Ok((scores_to_belief(&c.predict_design_row(row)?), w.clone())))
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse(&evidence)?;
    let label = pseudo_label(&fused);

    let skipped = vec![Branch::Skipped; classifiers.len()];
    if label.source_confidence < cfg.gate {
        return Ok(StepOutcome {
            fused,
            label,
            status: StepStatus::Gated,
            branches: skipped,
        });
    }
    if let Some(cap) = cfg.max_design_rows {
        if classifiers.iter().any(|c| c.design().rows() >= cap) {
            return Ok(StepOutcome {
                fused,
                label,
                status: StepStatus::Frozen,
                branches: skipped,
            });
        }
    }

    let mut staged = Vec::with_capacity(classifiers.len());
    for (c, row) in classifiers.iter().zip(&rows) {
        let mut design = c.design().clone();
        let mut pinv = c.design_pinv().clone();
        let mut w = c.output_weights().clone();
        let tol = scaled_c_tol(cfg.c_tol_rel, row);
        let inter = greville_append_in_place(&mut design, &mut pinv, row, tol)?;
        weight_update_in_place(&mut w, row, &label.onehot, &inter)?;
        staged.push((design, pinv, w, inter.branch));
    }
    let mut branches = Vec::with_capacity(staged.len());
    for (c, (design, pinv, w, branch)) in classifiers.iter_mut().zip(staged) {
        c.replace_state(design, pinv, w);
        branches.push(branch);
    }
    Ok(StepOutcome {
        fused,
        label,
        status: StepStatus::Updated,
        branches,
    })
}

/// One record of the per-sample event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub index: usize,
    /// Fused beliefs (or the single routed classifier's beliefs).
    pub beliefs: Vec<f64>,
    pub residual: f64,
    pub predicted: Option<usize>,
    pub confidence: f64,
    /// Whether the prediction came from evidence fusion.
    pub fused: bool,
    /// Base classifiers consulted for this sample.
    pub classifiers: Vec<usize>,
    pub update_applied: bool,
    pub branches: Vec<Branch>,
    pub status: StepStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub samples: usize,
    pub updates_applied: usize,
    pub gated: usize,
    pub frozen: usize,
    pub conflicts: usize,
    pub branch_c_nonzero: usize,
    pub branch_c_zero: usize,
}

impl StreamSummary {
    pub fn record(&mut self, ev: &StepEvent) {
        self.samples += 1;
        match ev.status {
            StepStatus::Updated => self.updates_applied += 1,
            StepStatus::Gated => self.gated += 1,
            StepStatus::Frozen => self.frozen += 1,
            StepStatus::Conflict => self.conflicts += 1,
            StepStatus::Static => {}
        }
        for b in &ev.branches {
            match b {
                Branch::CNonzero => self.branch_c_nonzero += 1,
                Branch::CZero => self.branch_c_zero += 1,
                Branch::Skipped => {}
            }
        }
    }

    pub fn from_events(events: &[StepEvent]) -> Self {
        let mut s = StreamSummary::default();
        events.iter().for_each(|e| s.record(e));
        s
    }
}

/// Run every row of `samples` through [`online_step`] in order.
///
/// Conflicts are logged and skipped; any other error aborts the stream.
pub fn run_stream(
    classifiers: &mut [BlsClassifier],
    weights: &[EvidenceWeights],
    samples: &Matrix,
    truth: Option<&[usize]>,
    cfg: &OnlineConfig,
) -> Result<Vec<StepEvent>> {
    cfg.validate()?;
    let all: Vec<usize> = (0..classifiers.len()).collect();
    let mut events = Vec::with_capacity(samples.rows());
    let mut warned_frozen = false;
    for (t, x) in samples.row_iter().enumerate() {
        let truth_t = truth.map(|l| l[t]);
        let ev = match online_step(classifiers, weights, x, cfg) {
            Ok(out) => {
                if out.status == StepStatus::Frozen && !warned_frozen {
                    log::warn!(
                        "design row cap {:?} reached at sample {t}; online updates frozen",
                        cfg.max_design_rows
                    );
                    warned_frozen = true;
                }
                StepEvent {
                    index: t,
                    beliefs: out.fused.beliefs,
                    residual: out.fused.residual,
                    predicted: Some(out.label.class),
                    confidence: out.label.source_confidence,
                    fused: true,
                    classifiers: all.clone(),
                    update_applied: out.status == StepStatus::Updated,
                    branches: out.branches,
                    status: out.status,
                    truth: truth_t,
                }
            }
            Err(e @ Error::Conflict { .. }) => {
                log::warn!("sample {t}: {e}; skipped");
                StepEvent {
                    index: t,
                    beliefs: Vec::new(),
                    residual: 0.0,
                    predicted: None,
                    confidence: 0.0,
                    fused: true,
                    classifiers: all.clone(),
                    update_applied: false,
                    branches: vec![Branch::Skipped; classifiers.len()],
                    status: StepStatus::Conflict,
                    truth: truth_t,
                }
            }
            Err(e) => return Err(e),
        };
        events.push(ev);
    }
    Ok(events)
}

pub fn write_events<W: Write>(mut writer: W, events: &[StepEvent]) -> std::io::Result<()> {
    for ev in events {
        serde_json::to_writer(&mut writer, ev)?;
        writeln!(writer)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{append_rows, matmul, pinv};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn rank_increasing_append_reaches_identity() {
        let a = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let p = pinv(&a, 0.0).unwrap();
        assert_eq!(p, Matrix::from_rows(&[[1.0], [0.0]]).unwrap());
        let row = [0.0, 1.0];
        let (a2, p2, inter) = greville_append(&a, &p, &row, default_c_tol(&row)).unwrap();
        assert_eq!(inter.branch, Branch::CNonzero);
        assert_eq!(a2, Matrix::identity(2));
        assert!(p2.max_abs_diff(&pinv(&a2, 0.0).unwrap()).unwrap() < 1e-12);
        assert_eq!(inter.d_row.len(), 1);
        assert_eq!(inter.c_row.len(), 2);
        assert_eq!(inter.b_col.len(), 2);
    }

    #[test]
    fn duplicate_row_takes_zero_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random(&mut rng, 8, 3);
        let p = pinv(&a, 1e-12).unwrap();
        let row = a.row(2).to_vec();
        let (a2, p2, inter) = greville_append(&a, &p, &row, default_c_tol(&row)).unwrap();
        assert_eq!(inter.branch, Branch::CZero);
        let batch = pinv(&a2, 1e-12).unwrap();
        assert!(p2.max_abs_diff(&batch).unwrap() <= 1e-6);
    }

    #[test]
    fn sequential_appends_match_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a = random(&mut rng, 30, 12);
        let mut p = pinv(&a, 1e-12).unwrap();
        let extra = random(&mut rng, 10, 12);
        for row in extra.row_iter() {
            greville_append_in_place(&mut a, &mut p, row, default_c_tol(row)).unwrap();
        }
        assert_eq!(a.shape(), (40, 12));
        assert_eq!(p.shape(), (12, 40));
        assert!(p.max_abs_diff(&pinv(&a, 1e-12).unwrap()).unwrap() <= 1e-6);
    }

    #[test]
    fn append_from_empty_design() {
        let a = Matrix::empty(2);
        let p = Matrix::zeros(2, 0);
        let row = [3.0, 4.0];
        let (a2, p2, inter) = greville_append(&a, &p, &row, default_c_tol(&row)).unwrap();
        assert_eq!(inter.branch, Branch::CNonzero);
        assert!(p2.max_abs_diff(&pinv(&a2, 0.0).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn append_rejects_bad_shapes() {
        let a = Matrix::zeros(2, 3);
        assert!(greville_append(&a, &Matrix::zeros(2, 3), &[0.0; 3], 1e-10).is_err());
        assert!(greville_append(&a, &Matrix::zeros(3, 2), &[0.0; 2], 1e-10).is_err());
        assert!(greville_append(&a, &Matrix::zeros(3, 2), &[0.0; 3], 0.0).is_err());
    }

    #[test]
    fn weight_update_zero_residual_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random(&mut rng, 10, 4);
        let p = pinv(&a, 1e-12).unwrap();
        let w = random(&mut rng, 4, 3);
        let row = random(&mut rng, 1, 4);
        let (_, _, inter) = greville_append(&a, &p, row.row(0), 1e-10).unwrap();
        let target = w.vecmat(row.row(0)).unwrap();
        assert_eq!(weight_update(&w, row.row(0), &target, &inter).unwrap(), w);
        assert!(weight_update(&w, row.row(0), &[0.0; 2], &inter).is_err());
    }

    #[test]
    fn scalar_recursive_least_squares() {
        // batch oracle: pinv([[1],[1]]) · [0.5, 1] = 0.75
        let a = Matrix::from_rows(&[[1.0]]).unwrap();
        let p = pinv(&a, 0.0).unwrap();
        let w = Matrix::from_rows(&[[0.5]]).unwrap();
        let (a2, _, inter) = greville_append(&a, &p, &[1.0], default_c_tol(&[1.0])).unwrap();
        assert_eq!(inter.branch, Branch::CZero);
        let w2 = weight_update(&w, &[1.0], &[1.0], &inter).unwrap();
        let batch = matmul(
            &pinv(&a2, 0.0).unwrap(),
            &Matrix::from_rows(&[[0.5], [1.0]]).unwrap(),
        )
        .unwrap();
        assert!((w2.get(0, 0) - 0.75).abs() < 1e-15);
        assert!((batch.get(0, 0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn true_label_updates_match_batch_refit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&mut rng, 25, 6);
        let y = random(&mut rng, 25, 3);
        let mut p = pinv(&a, 1e-12).unwrap();
        let mut w = matmul(&p, &y).unwrap();
        let mut design = a.clone();
        let extra = random(&mut rng, 8, 6);
        let extra_y = random(&mut rng, 8, 3);
        for (row, target) in extra.row_iter().zip(extra_y.row_iter()) {
            let inter =
                greville_append_in_place(&mut design, &mut p, row, default_c_tol(row)).unwrap();
            weight_update_in_place(&mut w, row, target, &inter).unwrap();
        }
        let all_a = append_rows(&a, &extra).unwrap();
        let all_y = append_rows(&y, &extra_y).unwrap();
        let batch = matmul(&pinv(&all_a, 1e-12).unwrap(), &all_y).unwrap();
        assert!(w.max_abs_diff(&batch).unwrap() <= 1e-6);
    }

    #[test]
    fn pseudo_label_cases() {
        let l = pseudo_label(&BeliefDistribution::new(vec![0.1, 0.7, 0.2]).unwrap());
        assert_eq!(
            (l.class, l.onehot.clone(), l.source_confidence),
            (1, vec![0.0, 1.0, 0.0], 0.7)
        );
        assert_eq!(
            pseudo_label(&BeliefDistribution::new(vec![0.5, 0.5]).unwrap()).class,
            0
        );
        let c = pseudo_label(&BeliefDistribution::new(vec![1.0, 0.0, 0.0]).unwrap());
        assert_eq!((c.class, c.source_confidence), (0, 1.0));
    }

    #[test]
    fn summary_counts_events() {
        let ev = StepEvent {
            index: 0,
            beliefs: vec![1.0, 0.0],
            residual: 0.0,
            predicted: Some(0),
            confidence: 1.0,
            fused: true,
            classifiers: vec![0, 1],
            update_applied: true,
            branches: vec![Branch::CZero, Branch::CNonzero],
            status: StepStatus::Updated,
            truth: None,
        };
        let s = StreamSummary::from_events(&[
            ev.clone(),
            StepEvent {
                status: StepStatus::Conflict,
                branches: vec![],
                ..ev
            },
        ]);
        assert_eq!(s.samples, 2);
        assert_eq!(s.updates_applied, 1);
        assert_eq!(s.conflicts, 1);
        assert_eq!((s.branch_c_zero, s.branch_c_nonzero), (1, 1));
    }
}
