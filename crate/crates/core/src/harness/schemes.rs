use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{percent, CompareReport, DiagnosisReport};
use super::weights::estimate_weights;
use super::{reference_comparison, DataSource, ExperimentConfig, Scheme};
use crate::bls::{scores_to_belief, BlsClassifier, BlsConfig};
use crate::dataio::{
    load_csv, one_hot, split, split_rows, synth_multimode, Dataset, Manifest, Standardizer,
};
use crate::er_fusion::EvidenceWeights;
use crate::error::{Error, Result};
use crate::online::{run_stream, Branch, StepEvent, StepStatus, StreamSummary};

/// A standardized dataset with its stratified row partition.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Every row, standardized with statistics of the training rows.
    pub data: Dataset,
    pub standardizer: Standardizer,
    /// Training rows used to fit classifiers.
    pub fit_rows: Vec<usize>,
    /// Training rows held out for evidence weights.
    pub validation_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub manifest: Manifest,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.dataset {
        DataSource::Synth(s) => synth_multimode(s, cfg.seed),
        DataSource::Csv { path, schema } => load_csv(path, schema),
    }
}

/// Load and partition the configured dataset.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let raw = load_dataset(cfg)?;
    let parts = split(&raw, cfg.train_fraction, cfg.seed)?;
    let inner = split_rows(
        &raw,
        &parts.train,
        1.0 - cfg.validation_fraction,
        cfg.seed.wrapping_add(1),
    )?;
    prepare_rows(raw, &parts.train, inner.train, inner.test, parts.test)
}

/// Standardize `raw` on `train` and package the given partition.
pub(crate) fn prepare_rows(
    raw: Dataset,
    train: &[usize],
    fit_rows: Vec<usize>,
    validation_rows: Vec<usize>,
    test_rows: Vec<usize>,
) -> Result<Prepared> {
    let standardizer = Standardizer::fit(&raw, train)?;
    let manifest = Manifest::build(&raw, Some(&standardizer));
    let data = standardizer.apply(&raw)?;
    Ok(Prepared {
        data,
        standardizer,
        fit_rows,
        validation_rows,
        test_rows,
        manifest,
    })
}

pub(crate) fn fit_classifier(
    cfg: BlsConfig,
    data: &Dataset,
    rows: &[usize],
) -> Result<BlsClassifier> {
    let part = data.select(rows);
    let mut c = BlsClassifier::init(cfg, part.features.cols(), data.n_classes())?;
    c.fit(
        &part.features,
        &one_hot(&part.fault_labels, data.n_classes())?,
    )?;
    Ok(c)
}

/// Base classifiers of the fused scheme with their evidence weights.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub classifiers: Vec<BlsClassifier>,
    pub weights: Vec<EvidenceWeights>,
}

pub fn train_ensemble(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Ensemble> {
    let classifiers = (0..cfg.classifiers.len())
        .map(|k| fit_classifier(cfg.classifier(k), &prep.data, &prep.fit_rows))
        .collect::<Result<Vec<_>>>()?;
    let weights = estimate_weights(&classifiers, &prep.data.select(&prep.validation_rows))?;
    Ok(Ensemble {
        classifiers,
        weights,
    })
}

/// A self-contained classifier file: the model plus everything needed to
/// feed it raw rows and name its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub classifier: BlsClassifier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_weights: Option<EvidenceWeights>,
    pub standardizer: Standardizer,
    pub class_names: Vec<String>,
    pub mode_names: Vec<String>,
    pub variable_names: Vec<String>,
}

impl Snapshot {
    pub fn new(
        classifier: BlsClassifier,
        weights: Option<EvidenceWeights>,
        prep: &Prepared,
    ) -> Self {
        Snapshot {
            classifier,
            evidence_weights: weights,
            standardizer: prep.standardizer.clone(),
            class_names: prep.data.class_names.clone(),
            mode_names: prep.data.mode_names.clone(),
            variable_names: prep.data.variable_names.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.classifier.validate()?;
        let n = self.classifier.n_classes();
        let d = self.classifier.input_dim();
        if self.class_names.len() != n
            || self.variable_names.len() != d
            || self.standardizer.means.len() != d
            || self.standardizer.stdevs.len() != d
        {
            return Err(Error::Config(
                "snapshot metadata does not match its classifier".into(),
            ));
        }
        if let Some(w) = &self.evidence_weights {
            if w.per_class.len() != n {
                return Err(Error::Config(
                    "snapshot weights do not match its classifier".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(s)?;
        snap.validate()?;
        Ok(snap)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// A scheme's report and its per-sample event log.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub report: DiagnosisReport,
    pub events: Vec<StepEvent>,
}

fn static_accuracy(c: &BlsClassifier, data: &Dataset, rows: &[usize]) -> Result<f64> {
    let part = data.select(rows);
    let scores = c.predict(&part.features)?;
    let hits = scores
        .row_iter()
        .zip(&part.fault_labels)
        .filter(|(s, &l)| scores_to_belief(s).argmax() == l)
        .count();
    Ok(percent(hits, rows.len()))
}

/// Fused, weighted, online-updated ensemble over the test stream.
pub fn run_scheme_ours(cfg: &ExperimentConfig, prep: &Prepared) -> Result<SchemeRun> {
    let ens = train_ensemble(cfg, prep)?;
    let base_accuracies = ens
        .classifiers
        .iter()
        .map(|c| static_accuracy(c, &prep.data, &prep.test_rows))
        .collect::<Result<Vec<_>>>()?;
    let mut classifiers = ens.classifiers;
    let run = stream_rows(&mut classifiers, &ens.weights, prep, &prep.test_rows, cfg)?;
    let mut report = run.report;
    report.evidence_weights = ens.weights.iter().map(|w| w.per_class.clone()).collect();
    report.base_accuracies = base_accuracies;
    Ok(SchemeRun {
        report,
        events: run.events,
    })
}

/// Stream `rows` of `prep.data` through the online ensemble in row order.
pub(crate) fn stream_rows(
    classifiers: &mut [BlsClassifier],
    weights: &[EvidenceWeights],
    prep: &Prepared,
    rows: &[usize],
    cfg: &ExperimentConfig,
) -> Result<SchemeRun> {
    let part = prep.data.select(rows);
    let mut events = run_stream(
        classifiers,
        weights,
        &part.features,
        Some(&part.fault_labels),
        &cfg.online,
    )?;
    for (ev, &r) in events.iter_mut().zip(rows) {
        ev.index = r;
    }
    let predictions: Vec<Option<usize>> = events.iter().map(|e| e.predicted).collect();
    let mut report = DiagnosisReport::tabulate(Scheme::Ours, &prep.data, rows, &predictions);
    report.stream = StreamSummary::from_events(&events);
    Ok(SchemeRun { report, events })
}

fn static_event(index: usize, scores: &[f64], k: usize, truth: usize) -> StepEvent {
    let b = scores_to_belief(scores);
    let p = b.argmax();
    StepEvent {
        index,
        confidence: b.beliefs[p],
        beliefs: b.beliefs,
        residual: b.residual,
        predicted: Some(p),
        fused: false,
        classifiers: vec![k],
        update_applied: false,
        branches: vec![Branch::Skipped],
        status: StepStatus::Static,
        truth: Some(truth),
    }
}

fn finish_static(
    scheme: Scheme,
    prep: &Prepared,
    events: Vec<StepEvent>,
    base: Vec<f64>,
) -> SchemeRun {
    let predictions: Vec<Option<usize>> = events.iter().map(|e| e.predicted).collect();
    let mut report = DiagnosisReport::tabulate(scheme, &prep.data, &prep.test_rows, &predictions);
    report.base_accuracies = base;
    report.stream = StreamSummary::from_events(&events);
    SchemeRun { report, events }
}

/// One static classifier trained on every mode pooled together.
pub fn run_scheme1(cfg: &ExperimentConfig, prep: &Prepared) -> Result<SchemeRun> {
    let c = fit_classifier(cfg.classifier(0), &prep.data, &prep.fit_rows)?;
    let part = prep.data.select(&prep.test_rows);
    let scores = c.predict(&part.features)?;
    let events: Vec<StepEvent> = scores
        .row_iter()
        .zip(&prep.test_rows)
        .zip(&part.fault_labels)
        .map(|((s, &r), &l)| static_event(r, s, 0, l))
        .collect();
    let acc = static_accuracy(&c, &prep.data, &prep.test_rows)?;
    Ok(finish_static(Scheme::Scheme1, prep, events, vec![acc]))
}

/// One static classifier per mode; each test sample is routed by its
/// recorded mode label.
pub fn run_scheme2(cfg: &ExperimentConfig, prep: &Prepared) -> Result<SchemeRun> {
    let n_modes = prep.data.n_modes();
    let mut per_mode = Vec::with_capacity(n_modes);
    for m in 0..n_modes {
        let rows: Vec<usize> = prep
            .fit_rows
            .iter()
            .copied()
            .filter(|&r| prep.data.mode_labels[r] == m)
            .collect();
        if rows.is_empty() {
            return Err(Error::Routing(format!(
                "mode {} has no training rows",
                prep.data.mode_names[m]
            )));
        }
        let mut bc = cfg.classifier(0);
        bc.seed = bc.seed.wrapping_add(m as u64);
        per_mode.push(fit_classifier(bc, &prep.data, &rows)?);
    }
    let mut events = Vec::with_capacity(prep.test_rows.len());
    for &r in &prep.test_rows {
        let m = prep.data.mode_labels[r];
        let scores =
            per_mode[m].predict_design_row(&per_mode[m].design_row(prep.data.features.row(r))?)?;
        events.push(static_event(r, &scores, m, prep.data.fault_labels[r]));
    }
    let base = (0..n_modes)
        .map(|m| {
            let rows: Vec<usize> = prep
                .test_rows
                .iter()
                .copied()
                .filter(|&r| prep.data.mode_labels[r] == m)
                .collect();
            static_accuracy(&per_mode[m], &prep.data, &rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish_static(Scheme::Scheme2, prep, events, base))
}

/// Every selected scheme on one shared partition.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: CompareReport,
    pub events: Vec<(Scheme, Vec<StepEvent>)>,
}

pub fn compare(cfg: &ExperimentConfig) -> Result<Comparison> {
    let prep = prepare(cfg)?;
    compare_prepared(cfg, &prep)
}

pub(crate) fn compare_prepared(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Comparison> {
    let mut reports = Vec::new();
    let mut events = Vec::new();
    for scheme in cfg.scheme.schemes() {
        log::info!("running {scheme}");
        let run = match scheme {
            Scheme::Ours => run_scheme_ours(cfg, prep)?,
            Scheme::Scheme1 => run_scheme1(cfg, prep)?,
            Scheme::Scheme2 => run_scheme2(cfg, prep)?,
        };
        reports.push(run.report);
        events.push((scheme, run.events));
    }
    // where the report lands is not part of the experiment
    let mut echo = cfg.clone();
    echo.report.out_dir = None;
    let mut report = CompareReport {
        seed: cfg.seed,
        config: echo,
        dataset: prep.manifest.clone(),
        reports,
        reference: Vec::new(),
    };
    if matches!(cfg.dataset, DataSource::Csv { .. }) {
        report.reference = reference_comparison(&report);
    }
    Ok(Comparison { report, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::SynthConfig;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            seed: 5,
            dataset: DataSource::Synth(SynthConfig {
                n_modes: 2,
                n_classes: 3,
                samples_per_cell: 20,
                n_features: 6,
                ..SynthConfig::default()
            }),
            ..ExperimentConfig::default()
        };
        for c in &mut cfg.classifiers {
            c.n_feature_groups = 3;
            c.nodes_per_feature_group = 4;
            c.nodes_per_enhancement_group = 8;
        }
        cfg
    }

    #[test]
    fn partition_is_disjoint_and_complete() {
        let prep = prepare(&small()).unwrap();
        let mut all: Vec<usize> = prep
            .fit_rows
            .iter()
            .chain(&prep.validation_rows)
            .chain(&prep.test_rows)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..prep.data.len()).collect::<Vec<_>>());
        // 20 per cell: 10 train (8 fit + 2 validation), 10 test
        assert_eq!(prep.fit_rows.len(), 6 * 8);
        assert_eq!(prep.validation_rows.len(), 6 * 2);
    }

    #[test]
    fn compare_runs_every_scheme() {
        let cmp = compare(&small()).unwrap();
        assert_eq!(cmp.report.reports.len(), 3);
        let n_test = cmp.events[0].1.len();
        for (scheme, events) in &cmp.events {
            assert_eq!(events.len(), n_test);
            let r = cmp.report.report(*scheme).unwrap();
            assert_eq!(r.cells.len(), 6);
            assert!(
                r.overall_accuracy > 90.0,
                "{scheme}: {}",
                r.overall_accuracy
            );
        }
        let ours = cmp.report.report(Scheme::Ours).unwrap();
        assert_eq!(ours.evidence_weights.len(), 3);
        assert_eq!(ours.stream.updates_applied, n_test);
        assert!(cmp.events[1]
            .1
            .iter()
            .all(|e| !e.fused && e.classifiers == vec![0]));
        assert!(cmp.events[2]
            .1
            .iter()
            .all(|e| e.status == StepStatus::Static));
    }

    #[test]
    fn snapshot_round_trips_exactly() {
        let cfg = small();
        let prep = prepare(&cfg).unwrap();
        let ens = train_ensemble(&cfg, &prep).unwrap();
        let snap = Snapshot::new(
            ens.classifiers[1].clone(),
            Some(ens.weights[1].clone()),
            &prep,
        );
        let back = Snapshot::from_json(&snap.to_json().unwrap()).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.to_json().unwrap(), snap.to_json().unwrap());
    }
}
