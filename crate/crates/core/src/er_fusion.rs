//! Evidential-reasoning combination of weighted belief distributions.
//!
//! Each evidence source contributes a [`BeliefDistribution`] over the `N`
//! classes and an [`EvidenceWeights`] vector. [`to_masses`] turns the pair into
//! a [`MassSet`] whose unassigned mass is split into a weight-induced part
//! (`m̄`) and an incompleteness-induced part (`m̃`). [`combine`] merges two
//! mass sets with conflict renormalization and [`finalize`] redistributes the
//! weight-induced remainder.
//!
//! With every weight of a source equal to `w` this is the classic scalar-weight
//! rule. With per-class weights the total unassigned mass is
//! `1 − Σₙ wₙβₙ`; its incompleteness part is taken as `mean(w)·residual` and the
//! remainder is attributed to weight, which keeps the masses summing to one and
//! coincides with the scalar rule when the weights are uniform.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Belief tolerance used when validating sums and ranges.
pub const BELIEF_TOL: f64 = 1e-12;

/// Normalizer denominators at or below this count as total conflict.
pub const CONFLICT_TOL: f64 = 1e-12;

/// Per-class belief with the unassigned remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefDistribution {
    pub beliefs: Vec<f64>,
    pub residual: f64,
}

impl BeliefDistribution {
    /// Build from beliefs alone; the residual is `1 − Σ beliefs`.
    pub fn new(beliefs: Vec<f64>) -> Result<Self> {
        let sum: f64 = beliefs.iter().sum();
        let residual = (1.0 - sum).max(0.0);
        let b = BeliefDistribution { beliefs, residual };
        b.validate()?;
        Ok(b)
    }

    pub fn uniform(n: usize) -> Self {
        BeliefDistribution {
            beliefs: vec![1.0 / n as f64; n],
            residual: 0.0,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.beliefs.len()
    }

    pub fn total(&self) -> f64 {
        self.beliefs.iter().sum()
    }

    /// Index of the largest belief; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.beliefs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beliefs.is_empty() {
            return Err(Error::Argument("belief distribution has no classes".into()));
        }
        if let Some(b) = self
            .beliefs
            .iter()
            .find(|b| !(-BELIEF_TOL..=1.0 + BELIEF_TOL).contains(*b))
        {
            return Err(Error::Argument(format!("belief {b} outside [0, 1]")));
        }
        let sum = self.total();
        if sum > 1.0 + BELIEF_TOL {
            return Err(Error::Argument(format!("beliefs sum to {sum} > 1")));
        }
        if (self.residual - (1.0 - sum)).abs() > 1e-9 {
            return Err(Error::Argument(format!(
                "residual {} inconsistent with belief sum {sum}",
                self.residual
            )));
        }
        Ok(())
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Weight of one evidence source, per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceWeights {
    pub per_class: Vec<f64>,
}

impl EvidenceWeights {
    pub fn new(per_class: Vec<f64>) -> Result<Self> {
        if let Some(w) = per_class.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::Argument(format!(
                "evidence weight {w} outside [0, 1]"
            )));
        }
        Ok(EvidenceWeights { per_class })
    }

    /// The classic rule: one scalar weight shared by every class.
    pub fn uniform(n: usize, w: f64) -> Result<Self> {
        EvidenceWeights::new(vec![w; n])
    }

    pub fn is_uniform(&self) -> bool {
        self.per_class.windows(2).all(|p| p[0] == p[1])
    }

    pub fn mean(&self) -> f64 {
        self.per_class.iter().sum::<f64>() / self.per_class.len() as f64
    }
}

/// Basic probability masses of one source (or of a combined accumulator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSet {
    pub assigned: Vec<f64>,
    pub unassigned_weight: f64,
    pub unassigned_incomplete: f64,
}

impl MassSet {
    /// Evidence that says nothing: all mass is weight-induced unassigned.
    pub fn vacuous(n: usize) -> Self {
        MassSet {
            assigned: vec![0.0; n],
            unassigned_weight: 1.0,
            unassigned_incomplete: 0.0,
        }
    }

    pub fn unassigned(&self) -> f64 {
        self.unassigned_weight + self.unassigned_incomplete
    }

    pub fn total(&self) -> f64 {
        self.assigned.iter().sum::<f64>() + self.unassigned()
    }
}

pub fn to_masses(belief: &BeliefDistribution, w: &EvidenceWeights) -> Result<MassSet> {
    let n = belief.n_classes();
    if w.per_class.len() != n {
        return Err(Error::Shape {
            op: "to_masses",
            left: (1, n),
            right: (1, w.per_class.len()),
        });
    }
    let assigned: Vec<f64> = belief
        .beliefs
        .iter()
        .zip(&w.per_class)
        .map(|(b, w)| w * b)
        .collect();
    let (unassigned_weight, unassigned_incomplete) = if w.is_uniform() {
        let w = w.per_class[0];
        (1.0 - w, w * belief.residual)
    } else {
        let total = 1.0 - assigned.iter().sum::<f64>();
        let incomplete = w.mean() * belief.residual;
        ((total - incomplete).max(0.0), incomplete)
    };
    Ok(MassSet {
        assigned,
        unassigned_weight,
        unassigned_incomplete,
    })
}

pub fn combine(acc: &MassSet, next: &MassSet) -> Result<MassSet> {
    combine_sources(acc, next, 0, 1)
}

fn combine_sources(
    acc: &MassSet,
    next: &MassSet,
    acc_idx: usize,
    next_idx: usize,
) -> Result<MassSet> {
    if acc.assigned.len() != next.assigned.len() {
        return Err(Error::Shape {
            op: "combine",
            left: (1, acc.assigned.len()),
            right: (1, next.assigned.len()),
        });
    }
    let sum_next: f64 = next.assigned.iter().sum();
    // Σₙ Σ_{t≠n} m_n·m_t = Σₙ m_n·(Σ_t m_t − m_n)
    let conflict: f64 = acc
        .assigned
        .iter()
        .zip(&next.assigned)
        .map(|(a, b)| a * (sum_next - b))
        .sum();
    let denom = 1.0 - conflict;
    if denom <= CONFLICT_TOL {
        return Err(Error::Conflict {
            acc: acc_idx,
            next: next_idx,
        });
    }
    let u = 1.0 / denom;
    let (fa, fb) = (acc.unassigned(), next.unassigned());
    let assigned = acc
        .assigned
        .iter()
        .zip(&next.assigned)
        .map(|(a, b)| u * (a * b + a * fb + fa * b))
        .collect();
    let (wa, wb) = (acc.unassigned_weight, next.unassigned_weight);
    let (ia, ib) = (acc.unassigned_incomplete, next.unassigned_incomplete);
    Ok(MassSet {
        assigned,
        unassigned_weight: u * wa * wb,
        unassigned_incomplete: u * (ia * ib + ia * wb + wa * ib),
    })
}

pub fn finalize(acc: &MassSet) -> Result<BeliefDistribution> {
    let scale = 1.0 - acc.unassigned_weight;
    if scale <= CONFLICT_TOL {
        return Err(Error::DegenerateEvidence);
    }
    let beliefs: Vec<f64> = acc
        .assigned
        .iter()
        .map(|m| (m / scale).clamp(0.0, 1.0))
        .collect();
    let sum: f64 = beliefs.iter().sum();
    let residual = (acc.unassigned_incomplete / scale).clamp(0.0, 1.0);
    // Absorb rounding so that Σβ + residual is exactly representable as 1.
    let residual = if (residual - (1.0 - sum)).abs() <= 1e-9 {
        (1.0 - sum).max(0.0)
    } else {
        residual
    };
    Ok(BeliefDistribution { beliefs, residual })
}

/// Fold every `(belief, weights)` pair into one fused belief.
pub fn fuse(evidence: &[(BeliefDistribution, EvidenceWeights)]) -> Result<BeliefDistribution> {
    let Some(((first_b, first_w), rest)) = evidence.split_first() else {
        return Err(Error::Argument("fuse: no evidence".into()));
    };
    let mut acc = to_masses(first_b, first_w)?;
    for (k, (b, w)) in rest.iter().enumerate() {
        let m = to_masses(b, w)?;
        acc = combine_sources(&acc, &m, k, k + 1)?;
    }
    finalize(&acc)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum WeightSpec {
    Scalar(f64),
    PerClass(Vec<f64>),
}

/// One line of an evidence file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EvidenceRecord {
    weights: WeightSpec,
    beliefs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
}

/// Read newline-delimited JSON evidence records.
///
/// Each line is `{"weights": w | [w…], "beliefs": [β…], "residual": r}`; the
/// residual is optional and checked against the beliefs when present. Blank
/// lines and lines starting with `#` are ignored.
pub fn read_evidence<R: BufRead>(
    reader: R,
    source: &str,
) -> Result<Vec<(BeliefDistribution, EvidenceWeights)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: source.to_string(),
            line: line_no,
            msg,
        };
        let rec: EvidenceRecord =
            serde_json::from_str(trimmed).map_err(|e| parse_err(e.to_string()))?;
        let n = rec.beliefs.len();
        let weights = match rec.weights {
            WeightSpec::Scalar(w) => EvidenceWeights::uniform(n, w),
            WeightSpec::PerClass(w) => EvidenceWeights::new(w),
        }
        .map_err(|e| parse_err(e.to_string()))?;
        let belief = match rec.residual {
            Some(r) => {
                let b = BeliefDistribution {
                    beliefs: rec.beliefs,
                    residual: r,
                };
                b.validate().map(|_| b)
            }
            None => BeliefDistribution::new(rec.beliefs),
        }
        .map_err(|e| parse_err(e.to_string()))?;
        out.push((belief, weights));
    }
    Ok(out)
}

pub fn write_evidence<W: Write>(
    mut writer: W,
    evidence: &[(BeliefDistribution, EvidenceWeights)],
) -> std::io::Result<()> {
    for (b, w) in evidence {
        let rec = EvidenceRecord {
            weights: WeightSpec::PerClass(w.per_class.clone()),
            beliefs: b.beliefs.clone(),
            residual: Some(b.residual),
        };
        serde_json::to_writer(&mut writer, &rec)?;
        writeln!(writer)?;
    }
    Ok(())
}
