use serde::{Deserialize, Serialize};

use super::schemes::{load_dataset, prepare_rows, stream_rows, train_ensemble, Prepared};
use super::{DataSource, ExperimentConfig};
use crate::dataio::{split_rows, SynthConfig};
use crate::error::{Error, Result};
use crate::online::{OnlineConfig, StreamSummary};

/// Paired adaptive/frozen run over a chronologically split stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    /// `train_fraction` here is the share of each cell's earliest samples
    /// used for training; the remainder is streamed in time order.
    pub experiment: ExperimentConfig,
    /// Share of the stream (its end) on which both runs are scored.
    pub tail_fraction: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig::preset(0)
    }
}

impl DriftConfig {
    /// Benchmark layout with mode centres moving linearly over time.
    pub fn preset(seed: u64) -> Self {
        DriftConfig {
            experiment: ExperimentConfig {
                seed,
                dataset: DataSource::Synth(SynthConfig {
                    samples_per_cell: 100,
                    drift_rate: 0.1,
                    ..SynthConfig::default()
                }),
                train_fraction: 0.3,
                ..ExperimentConfig::default()
            },
            tail_fraction: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "tail_fraction must be in (0, 1], got {}",
                self.tail_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub stream_len: usize,
    pub tail_len: usize,
    /// Percent, over the whole stream.
    pub adaptive_accuracy: f64,
    pub frozen_accuracy: f64,
    /// Percent, over the final `tail_len` samples.
    pub adaptive_tail_accuracy: f64,
    pub frozen_tail_accuracy: f64,
    pub adaptive_stream: StreamSummary,
    pub frozen_stream: StreamSummary,
}

/// Earliest `train_fraction` of every cell for training, the rest streamed.
fn chronological(cfg: &ExperimentConfig) -> Result<Prepared> {
    let raw = load_dataset(cfg)?;
    let all: Vec<usize> = (0..raw.len()).collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for ((m, f), idx) in raw.cells(&all) {
        if idx.len() < 2 {
            return Err(Error::Stratification {
                mode: raw.mode_names[m].clone(),
                fault: raw.class_names[f].clone(),
                count: idx.len(),
            });
        }
        let n = ((cfg.train_fraction * idx.len() as f64).floor() as usize).clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..n]);
        test.extend_from_slice(&idx[n..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    let inner = split_rows(
        &raw,
        &train,
        1.0 - cfg.validation_fraction,
        cfg.seed.wrapping_add(1),
    )?;
    prepare_rows(raw, &train, inner.train, inner.test, test)
}

/// Stream the post-training samples twice from the same trained ensemble:
/// once with the configured gate and once frozen.
pub fn run_drift_experiment(cfg: &DriftConfig) -> Result<DriftReport> {
    cfg.validate()?;
    let exp = &cfg.experiment;
    let prep = chronological(exp)?;
    let ens = train_ensemble(exp, &prep)?;
    let rows = &prep.test_rows;
    let tail_len = ((cfg.tail_fraction * rows.len() as f64).ceil() as usize).clamp(1, rows.len());

    let mut runs = Vec::with_capacity(2);
    for online in [
        exp.online.clone(),
        OnlineConfig {
            gate: OnlineConfig::frozen().gate,
            ..exp.online.clone()
        },
    ] {
        let run_cfg = ExperimentConfig {
            online,
            ..exp.clone()
        };
        let mut classifiers = ens.classifiers.clone();
        let run = stream_rows(&mut classifiers, &ens.weights, &prep, rows, &run_cfg)?;
        let hits: Vec<bool> = run
            .events
            .iter()
            .map(|e| e.predicted.is_some() && e.predicted == e.truth)
            .collect();
        let acc = |h: &[bool]| 100.0 * h.iter().filter(|&&x| x).count() as f64 / h.len() as f64;
        runs.push((
            acc(&hits),
            acc(&hits[hits.len() - tail_len..]),
            run.report.stream,
        ));
    }
    let (frozen_acc, frozen_tail, frozen_stream) = runs.pop().expect("two runs");
    let (adaptive_acc, adaptive_tail, adaptive_stream) = runs.pop().expect("two runs");
    Ok(DriftReport {
        stream_len: rows.len(),
        tail_len,
        adaptive_accuracy: adaptive_acc,
        frozen_accuracy: frozen_acc,
        adaptive_tail_accuracy: adaptive_tail,
        frozen_tail_accuracy: frozen_tail,
        adaptive_stream,
        frozen_stream,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chronological_split_trains_on_the_past() {
        let mut cfg = DriftConfig::preset(1).experiment;
        if let DataSource::Synth(s) = &mut cfg.dataset {
            s.n_modes = 2;
            s.n_classes = 3;
            s.samples_per_cell = 10;
        }
        let prep = chronological(&cfg).unwrap();
        let train: Vec<usize> = prep
            .fit_rows
            .iter()
            .chain(&prep.validation_rows)
            .copied()
            .collect();
        let last_train = train.iter().max().unwrap();
        let first_test = prep.test_rows.iter().min().unwrap();
        assert!(last_train < first_test);
        assert_eq!(train.len(), 6 * 3);
    }

    #[test]
    fn bad_tail_is_config_error() {
        let cfg = DriftConfig {
            tail_fraction: 0.0,
            ..DriftConfig::default()
        };
        assert_eq!(
            run_drift_experiment(&cfg).unwrap_err().kind(),
            crate::ErrorKind::Config
        );
    }
}
