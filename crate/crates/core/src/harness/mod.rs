//! Experiment harness: the proposed fused/online scheme against the pooled
//! single-classifier and per-mode baselines, with reports.

mod drift;
mod reference;
mod report;
mod schemes;
mod weights;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bls::BlsConfig;
use crate::dataio::{Schema, SwappedPair, SynthConfig};
use crate::error::{Error, Result};
use crate::online::OnlineConfig;

pub use drift::{run_drift_experiment, DriftConfig, DriftReport};
pub use reference::{reference_accuracy, reference_comparison, ReferenceCell, REFERENCE_TABLE};
pub use report::{
    accuracy_table, emit_report, CellAccuracy, CompareReport, DiagnosisReport, ReportPaths,
};
pub use schemes::{
    compare, prepare, run_scheme1, run_scheme2, run_scheme_ours, train_ensemble, Comparison,
    Ensemble, Prepared, SchemeRun, Snapshot,
};
pub use weights::estimate_weights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ours,
    Scheme1,
    Scheme2,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Ours, Scheme::Scheme1, Scheme::Scheme2];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Ours => "ours",
            Scheme::Scheme1 => "scheme1",
            Scheme::Scheme2 => "scheme2",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeSelector {
    Ours,
    Scheme1,
    Scheme2,
    All,
}

impl SchemeSelector {
    pub fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeSelector::Ours => vec![Scheme::Ours],
            SchemeSelector::Scheme1 => vec![Scheme::Scheme1],
            SchemeSelector::Scheme2 => vec![Scheme::Scheme2],
            SchemeSelector::All => Scheme::ALL.to_vec(),
        }
    }
}

impl FromStr for SchemeSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(SchemeSelector::Ours),
            "scheme1" => Ok(SchemeSelector::Scheme1),
            "scheme2" => Ok(SchemeSelector::Scheme2),
            "all" => Ok(SchemeSelector::All),
            other => Err(Error::Config(format!(
                "unknown scheme {other:?} (expected ours, scheme1, scheme2, all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synth(SynthConfig),
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: Schema,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub out_dir: Option<PathBuf>,
    /// Also write SVG bar charts next to the machine-readable report.
    pub charts: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            out_dir: None,
            charts: true,
        }
    }
}

/// The three base-classifier presets: distinct node layouts, and seed
/// offsets 0, 1, 2 relative to the experiment seed.
pub fn default_classifiers() -> Vec<BlsConfig> {
    let base = BlsConfig::default();
    vec![
        base.clone(),
        BlsConfig {
            n_feature_groups: 8,
            nodes_per_feature_group: 12,
            n_enhancement_groups: 2,
            nodes_per_enhancement_group: 60,
            seed: 1,
            ..base.clone()
        },
        BlsConfig {
            n_feature_groups: 12,
            nodes_per_feature_group: 8,
            n_enhancement_groups: 1,
            nodes_per_enhancement_group: 150,
            seed: 2,
            ..base
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DataSource,
    /// Base classifiers; each `seed` is an offset added to the experiment
    /// seed. Scheme 1 and scheme 2 use the first entry.
    pub classifiers: Vec<BlsConfig>,
    pub train_fraction: f64,
    /// Share of the training rows held out for evidence-weight estimation.
    pub validation_fraction: f64,
    pub online: OnlineConfig,
    pub scheme: SchemeSelector,
    pub report: ReportConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            dataset: DataSource::Synth(SynthConfig::default()),
            classifiers: default_classifiers(),
            train_fraction: 0.5,
            validation_fraction: 0.2,
            online: OnlineConfig::default(),
            scheme: SchemeSelector::All,
            report: ReportConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classifiers.is_empty() {
            return Err(Error::Config("at least one classifier is required".into()));
        }
        for c in &self.classifiers {
            c.validate()?;
        }
        for (name, f) in [
            ("train_fraction", self.train_fraction),
            ("validation_fraction", self.validation_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1), got {f}")));
            }
        }
        self.online.validate()?;
        if let DataSource::Synth(s) = &self.dataset {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Effective configuration of base classifier `k`.
    pub fn classifier(&self, k: usize) -> BlsConfig {
        let mut c = self.classifiers[k].clone();
        c.seed = self.seed.wrapping_add(c.seed);
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from a TOML file; relative dataset paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let DataSource::Csv { path: p, .. } = &mut cfg.dataset {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = &mut cfg.report.out_dir {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config is always TOML-representable")
    }
}

/// The four-mode, seven-state benchmark: 50 samples per cell, 20 features,
/// class separation 8× the noise.
pub fn benchmark_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    }
}

/// Classes an engineered config makes confusable for pooled training.
pub const ENGINEERED_CLASSES: [usize; 2] = [5, 6];
/// Mode (dense id) in which the engineered pair trades places.
pub const ENGINEERED_MODE: usize = 2;

/// Benchmark variant where classes 5 and 6 swap centres in the third mode,
/// so their pooled distributions share a mean and only the mode offset
/// separates them. 100 samples per cell.
pub fn engineered_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        dataset: DataSource::Synth(SynthConfig {
            mode_offset: 6.0,
            samples_per_cell: 100,
            swapped_pair: Some(SwappedPair {
                classes: ENGINEERED_CLASSES,
                modes: vec![ENGINEERED_MODE],
            }),
            ..SynthConfig::default()
        }),
        ..ExperimentConfig::default()
    }
}
