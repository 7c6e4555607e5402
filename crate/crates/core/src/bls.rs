//! Broad Learning System base classifier.
//!
//! A sample `x` is mapped through `N_f` random feature groups
//! `zᵢ = φ(x·W_eᵢ + β_eᵢ)` and `N_h` random enhancement groups
//! `hⱼ = ξ(z·W_hⱼ + β_hⱼ)`; the design row is `[z₁ … z_{N_f} | h₁ … h_{N_h}]`.
//! Only the output weights are trained, by least squares against one-hot
//! targets: `W = A⁺Y`. The design matrix and its pseudo-inverse are kept so
//! that new rows can be folded in incrementally (see [`crate::online`]).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::er_fusion::BeliefDistribution;
use crate::error::{Error, Result};
use crate::numkernel::{self, hstack, matmul, pinv, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureActivation {
    Linear,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnhancementActivation {
    Tanh,
    Sigmoid,
}

impl FeatureActivation {
    fn apply(self, v: f64) -> f64 {
        match self {
            FeatureActivation::Linear => v,
            FeatureActivation::Tanh => v.tanh(),
        }
    }
}

impl EnhancementActivation {
    fn apply(self, v: f64) -> f64 {
        match self {
            EnhancementActivation::Tanh => v.tanh(),
            EnhancementActivation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlsConfig {
    pub n_feature_groups: usize,
    pub nodes_per_feature_group: usize,
    pub n_enhancement_groups: usize,
    pub nodes_per_enhancement_group: usize,
    pub feature_activation: FeatureActivation,
    pub enhancement_activation: EnhancementActivation,
    /// Shrink factor applied to the random enhancement weights.
    pub enhancement_scale: f64,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for BlsConfig {
    fn default() -> Self {
        BlsConfig {
            n_feature_groups: 10,
            nodes_per_feature_group: 10,
            n_enhancement_groups: 1,
            nodes_per_enhancement_group: 100,
            feature_activation: FeatureActivation::Linear,
            enhancement_activation: EnhancementActivation::Tanh,
            enhancement_scale: 0.8,
            ridge: numkernel::DEFAULT_RIDGE,
            seed: 0,
        }
    }
}

impl BlsConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_feature_groups", self.n_feature_groups),
            ("nodes_per_feature_group", self.nodes_per_feature_group),
            ("n_enhancement_groups", self.n_enhancement_groups),
            (
                "nodes_per_enhancement_group",
                self.nodes_per_enhancement_group,
            ),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, c)| *c == 0) {
            return Err(Error::Config(format!("{name} must be >= 1")));
        }
        if !(self.enhancement_scale > 0.0 && self.enhancement_scale.is_finite()) {
            return Err(Error::Config(format!(
                "enhancement_scale must be > 0, got {}",
                self.enhancement_scale
            )));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config(format!(
                "ridge must be >= 0, got {}",
                self.ridge
            )));
        }
        Ok(())
    }

    pub fn feature_width(&self) -> usize {
        self.n_feature_groups * self.nodes_per_feature_group
    }

    pub fn enhancement_width(&self) -> usize {
        self.n_enhancement_groups * self.nodes_per_enhancement_group
    }

    /// Column count of the design matrix.
    pub fn design_width(&self) -> usize {
        self.feature_width() + self.enhancement_width()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlsClassifier {
    config: BlsConfig,
    input_dim: usize,
    n_classes: usize,
    feature_weights: Vec<Matrix>,
    feature_biases: Vec<Vec<f64>>,
    enhancement_weights: Vec<Matrix>,
    enhancement_biases: Vec<Vec<f64>>,
    design: Matrix,
    design_pinv: Matrix,
    output_weights: Matrix,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * rng.random_range(-1.0..=1.0))
        .collect();
    Matrix::new(rows, cols, data).expect("uniform draws are finite")
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// `[z | h]`: feature columns first, then enhancement columns.
pub fn assemble(z: &Matrix, h: &Matrix) -> Result<Matrix> {
    hstack(z, h)
}

impl BlsClassifier {
    pub fn init(config: BlsConfig, input_dim: usize, n_classes: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("input_dim must be >= 1".into()));
        }
        if n_classes < 2 {
            return Err(Error::Config(format!(
                "n_classes must be >= 2, got {n_classes}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n_e = config.nodes_per_feature_group;
        let n_g = config.nodes_per_enhancement_group;
        let mut feature_weights = Vec::with_capacity(config.n_feature_groups);
        let mut feature_biases = Vec::with_capacity(config.n_feature_groups);
        for _ in 0..config.n_feature_groups {
            feature_weights.push(uniform_matrix(&mut rng, input_dim, n_e, 1.0));
            feature_biases.push(uniform_vec(&mut rng, n_e));
        }
        let mut enhancement_weights = Vec::with_capacity(config.n_enhancement_groups);
        let mut enhancement_biases = Vec::with_capacity(config.n_enhancement_groups);
        for _ in 0..config.n_enhancement_groups {
            enhancement_weights.push(uniform_matrix(
                &mut rng,
                config.feature_width(),
                n_g,
                config.enhancement_scale,
            ));
            enhancement_biases.push(uniform_vec(&mut rng, n_g));
        }
        let width = config.design_width();
        Ok(BlsClassifier {
            config,
            input_dim,
            n_classes,
            feature_weights,
            feature_biases,
            enhancement_weights,
            enhancement_biases,
            design: Matrix::empty(width),
            design_pinv: Matrix::zeros(width, 0),
            output_weights: Matrix::zeros(width, n_classes),
        })
    }

    pub fn config(&self) -> &BlsConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_weights(&self) -> &[Matrix] {
        &self.feature_weights
    }

    pub fn enhancement_weights(&self) -> &[Matrix] {
        &self.enhancement_weights
    }

    pub fn design(&self) -> &Matrix {
        &self.design
    }

    pub fn design_pinv(&self) -> &Matrix {
        &self.design_pinv
    }

    pub fn output_weights(&self) -> &Matrix {
        &self.output_weights
    }

    pub fn is_fitted(&self) -> bool {
        self.design.rows() > 0
    }

    pub fn map_features(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim {
            return Err(Error::Shape {
                op: "map_features",
                left: x.shape(),
                right: (self.input_dim, self.config.nodes_per_feature_group),
            });
        }
        let groups = self
            .feature_weights
            .iter()
            .zip(&self.feature_biases)
            .map(|(w, b)| affine(x, w, b, |v| self.config.feature_activation.apply(v)))
            .collect::<Result<Vec<_>>>()?;
        concat_columns(&groups, x.rows())
    }

    pub fn map_enhancement(&self, z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.config.feature_width() {
            return Err(Error::Shape {
                op: "map_enhancement",
                left: z.shape(),
                right: (
                    self.config.feature_width(),
                    self.config.nodes_per_enhancement_group,
                ),
            });
        }
        let groups = self
            .enhancement_weights
            .iter()
            .zip(&self.enhancement_biases)
            .map(|(w, b)| affine(z, w, b, |v| self.config.enhancement_activation.apply(v)))
            .collect::<Result<Vec<_>>>()?;
        concat_columns(&groups, z.rows())
    }

    /// Full design matrix `[Z | H]` for a batch of samples.
    pub fn design_matrix(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.map_features(x)?;
        let h = self.map_enhancement(&z)?;
        assemble(&z, &h)
    }

    /// Design row for a single sample.
    pub fn design_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let a = self.design_matrix(&Matrix::row_vector(x)?)?;
        Ok(a.row(0).to_vec())
    }

    pub fn fit(&mut self, x: &Matrix, y_onehot: &Matrix) -> Result<()> {
        if x.rows() != y_onehot.rows() || y_onehot.cols() != self.n_classes {
            return Err(Error::Shape {
                op: "fit",
                left: x.shape(),
                right: y_onehot.shape(),
            });
        }
        if x.rows() == 0 {
            return Err(Error::Argument("fit: no training rows".into()));
        }
        for (i, row) in y_onehot.row_iter().enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || zeros != row.len() - 1 {
                return Err(Error::Argument(format!(
                    "fit: label row {i} is not one-hot"
                )));
            }
        }
        self.fit_targets(x, y_onehot)
    }

    /// Least-squares fit against arbitrary real-valued targets.
    pub fn fit_targets(&mut self, x: &Matrix, targets: &Matrix) -> Result<()> {
        if x.rows() != targets.rows() || targets.cols() != self.n_classes {
            return Err(Error::Shape {
                op: "fit_targets",
                left: x.shape(),
                right: targets.shape(),
            });
        }
        let a = self.design_matrix(x)?;
        let a_pinv = pinv(&a, self.config.ridge)?;
        self.output_weights = matmul(&a_pinv, targets)?;
        self.design = a;
        self.design_pinv = a_pinv;
        Ok(())
    }

    /// Raw class scores, one row per sample.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if !self.is_fitted() {
            return Err(Error::NotFitted);
        }
        matmul(&self.design_matrix(x)?, &self.output_weights)
    }

    /// Scores for an already-mapped design row.
    pub fn predict_design_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if !self.is_fitted() {
            return Err(Error::NotFitted);
        }
        self.output_weights.vecmat(row)
    }

    pub(crate) fn replace_state(
        &mut self,
        design: Matrix,
        design_pinv: Matrix,
        output_weights: Matrix,
    ) {
        debug_assert_eq!(design.cols(), self.config.design_width());
        debug_assert_eq!(design.rows(), design_pinv.cols());
        self.design = design;
        self.design_pinv = design_pinv;
        self.output_weights = output_weights;
    }

    /// Structural checks for a deserialized snapshot.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let width = self.config.design_width();
        let bad = |what: &str| Err(Error::Config(format!("classifier snapshot: {what}")));
        if self.feature_weights.len() != self.config.n_feature_groups
            || self.feature_biases.len() != self.config.n_feature_groups
            || self.enhancement_weights.len() != self.config.n_enhancement_groups
            || self.enhancement_biases.len() != self.config.n_enhancement_groups
        {
            return bad("group count does not match config");
        }
        let fe_ok = self
            .feature_weights
            .iter()
            .all(|w| w.shape() == (self.input_dim, self.config.nodes_per_feature_group))
            && self
                .feature_biases
                .iter()
                .all(|b| b.len() == self.config.nodes_per_feature_group);
        let en_ok = self.enhancement_weights.iter().all(|w| {
            w.shape()
                == (
                    self.config.feature_width(),
                    self.config.nodes_per_enhancement_group,
                )
        }) && self
            .enhancement_biases
            .iter()
            .all(|b| b.len() == self.config.nodes_per_enhancement_group);
        if !fe_ok || !en_ok {
            return bad("random parameter shape mismatch");
        }
        if self.design.cols() != width
            || self.design_pinv.rows() != width
            || self.output_weights.shape() != (width, self.n_classes)
            || self.design.rows() != self.design_pinv.cols()
        {
            return bad("design / pseudo-inverse / output weight shapes disagree");
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: BlsClassifier = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

fn affine(x: &Matrix, w: &Matrix, bias: &[f64], act: impl Fn(f64) -> f64) -> Result<Matrix> {
    let mut out = matmul(x, w)?;
    let cols = out.cols();
    let mut data = out.data().to_vec();
    for row in data.chunks_exact_mut(cols) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    out = Matrix::new(out.rows(), cols, data)?;
    out.map_inplace(act);
    Ok(out)
}

fn concat_columns(blocks: &[Matrix], rows: usize) -> Result<Matrix> {
    blocks
        .iter()
        .try_fold(Matrix::zeros(rows, 0), |acc, b| hstack(&acc, b))
}

/// Turn raw least-squares scores into a complete belief distribution.
///
/// Scores are shifted up by the most negative entry (if any) and then
/// L1-normalized; an all-zero vector maps to the uniform distribution.
pub fn scores_to_belief(scores: &[f64]) -> BeliefDistribution {
    let n = scores.len();
    let min = scores.iter().copied().fold(0.0_f64, f64::min);
    let shifted: Vec<f64> = scores.iter().map(|s| s - min).collect();
    let sum: f64 = shifted.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return BeliefDistribution::uniform(n);
    }
    let beliefs: Vec<f64> = shifted.iter().map(|s| (s / sum).clamp(0.0, 1.0)).collect();
    BeliefDistribution {
        beliefs,
        residual: 0.0,
    }
}
