use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use evidiag::bls::BlsClassifier;
use evidiag::dataio::{load_csv, save_csv, synth_multimode, Manifest};
use evidiag::er_fusion::{fuse, read_evidence, EvidenceWeights};
use evidiag::harness::{
    accuracy_table, compare, emit_report, prepare, train_ensemble, DataSource, ExperimentConfig,
    Snapshot,
};
use evidiag::online::{run_stream, write_events, OnlineConfig, StreamSummary};
use evidiag::{Dataset, Error, Matrix, Result, Schema};
use serde::Serialize;

use crate::{Command, ExperimentArgs, StreamInput};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { exp, out } => train(&exp, &out),
        Command::Evaluate { input, out } => evaluate(&input, out.as_deref()),
        Command::Stream {
            input,
            gate,
            max_rows,
            log,
            save,
        } => {
            let cfg = OnlineConfig {
                gate,
                max_design_rows: max_rows,
                ..OnlineConfig::default()
            };
            stream(&input, &cfg, &log, save.as_deref())
        }
        Command::Compare { exp, scheme, out } => {
            let mut cfg = load_config(&exp)?;
            if let Some(s) = scheme {
                cfg.scheme = s;
            }
            if out.is_some() {
                cfg.report.out_dir = out;
            }
            run_compare(&cfg)
        }
        Command::Fuse { evidence } => run_fuse(&evidence),
        Command::Synth { exp, out } => synth(&exp, &out),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(path))
}

fn load_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn manifest_toml(m: &Manifest) -> Result<String> {
    toml::to_string(m).map_err(|e| Error::Config(format!("manifest: {e}")))
}

fn print_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn train(args: &ExperimentArgs, out: &Path) -> Result<()> {
    let cfg = load_config(args)?;
    let prep = prepare(&cfg)?;
    let ens = train_ensemble(&cfg, &prep)?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    for (k, (c, w)) in ens.classifiers.into_iter().zip(ens.weights).enumerate() {
        let path = out.join(format!("classifier_{k}.json"));
        Snapshot::new(c, Some(w), &prep).save(&path)?;
        println!("{}", path.display());
    }
    write_text(&out.join("manifest.toml"), &manifest_toml(&prep.manifest)?)
}

/// Snapshots that can be fed the same standardized rows.
struct Loaded {
    classifiers: Vec<BlsClassifier>,
    weights: Vec<EvidenceWeights>,
    reference: Snapshot,
}

fn load_snapshots(paths: &[PathBuf]) -> Result<Loaded> {
    let snaps = paths
        .iter()
        .map(|p| Snapshot::load(p))
        .collect::<Result<Vec<_>>>()?;
    let first = &snaps[0];
    for (p, s) in paths.iter().zip(&snaps).skip(1) {
        if s.standardizer != first.standardizer
            || s.class_names != first.class_names
            || s.variable_names != first.variable_names
        {
            return Err(Error::Config(format!(
                "{}: snapshot data layout differs from {}",
                p.display(),
                paths[0].display()
            )));
        }
    }
    let n = first.class_names.len();
    let weights = snaps
        .iter()
        .map(|s| match &s.evidence_weights {
            Some(w) => Ok(w.clone()),
            None => EvidenceWeights::uniform(n, 1.0),
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = first.clone();
    Ok(Loaded {
        classifiers: snaps.into_iter().map(|s| s.classifier).collect(),
        weights,
        reference,
    })
}

/// Standardized features and, when every label is known to the snapshots,
/// the truth in snapshot class ids.
fn load_input(
    input: &StreamInput,
    snap: &Snapshot,
) -> Result<(Dataset, Matrix, Option<Vec<usize>>)> {
    let mut schema = match &input.schema {
        Some(p) => Schema::load(p)?,
        None => Schema::default(),
    };
    schema.feature_columns = Some(snap.variable_names.clone());
    let data = load_csv(&input.input, &schema)?;
    let x = snap.standardizer.apply_matrix(&data.features)?;
    let ids: Option<Vec<usize>> = data
        .class_names
        .iter()
        .map(|c| snap.class_names.iter().position(|s| s == c))
        .collect();
    let truth = match ids {
        Some(ids) => Some(data.fault_labels.iter().map(|&l| ids[l]).collect()),
        None => {
            log::warn!("input labels are not all snapshot classes; accuracy is not scored");
            None
        }
    };
    Ok((data, x, truth))
}

#[derive(Serialize)]
struct ClassAccuracy {
    class: String,
    correct: usize,
    total: usize,
    accuracy: f64,
}

#[derive(Serialize)]
struct Evaluation {
    samples: usize,
    /// Percent, one per snapshot.
    classifier_accuracies: Vec<f64>,
    fused_accuracy: f64,
    fused_per_class: Vec<ClassAccuracy>,
    unpredicted: usize,
}

fn percent(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        100.0 * a as f64 / b as f64
    }
}

fn evaluate(input: &StreamInput, out: Option<&Path>) -> Result<()> {
    let mut loaded = load_snapshots(&input.snapshot)?;
    let (_, x, truth) = load_input(input, &loaded.reference)?;
    let truth = truth.ok_or_else(|| Error::Parse {
        path: input.input.display().to_string(),
        line: 1,
        msg: "evaluate needs fault labels drawn from the snapshot classes".into(),
    })?;
    let classifier_accuracies = loaded
        .classifiers
        .iter()
        .map(|c| {
            let scores = c.predict(&x)?;
            let hits = scores
                .row_iter()
                .zip(&truth)
                .filter(|(s, &t)| evidiag::bls::scores_to_belief(s).argmax() == t)
                .count();
            Ok(percent(hits, truth.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let events = run_stream(
        &mut loaded.classifiers,
        &loaded.weights,
        &x,
        Some(&truth),
        &OnlineConfig::frozen(),
    )?;
    let n = loaded.reference.class_names.len();
    let (mut correct, mut total) = (vec![0usize; n], vec![0usize; n]);
    for (e, &t) in events.iter().zip(&truth) {
        total[t] += 1;
        if e.predicted == Some(t) {
            correct[t] += 1;
        }
    }
    let eval = Evaluation {
        samples: truth.len(),
        classifier_accuracies,
        fused_accuracy: percent(correct.iter().sum(), truth.len()),
        fused_per_class: (0..n)
            .filter(|&c| total[c] > 0)
            .map(|c| ClassAccuracy {
                class: loaded.reference.class_names[c].clone(),
                correct: correct[c],
                total: total[c],
                accuracy: percent(correct[c], total[c]),
            })
            .collect(),
        unpredicted: events.iter().filter(|e| e.predicted.is_none()).count(),
    };
    print_json(&eval, out)
}

#[derive(Serialize)]
struct StreamReport {
    #[serde(flatten)]
    summary: StreamSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
}

fn stream(
    input: &StreamInput,
    cfg: &OnlineConfig,
    log_path: &Path,
    save: Option<&Path>,
) -> Result<()> {
    cfg.validate()?;
    let mut loaded = load_snapshots(&input.snapshot)?;
    let (_, x, truth) = load_input(input, &loaded.reference)?;
    let events = run_stream(
        &mut loaded.classifiers,
        &loaded.weights,
        &x,
        truth.as_deref(),
        cfg,
    )?;
    let mut w = create(log_path)?;
    write_events(&mut w, &events)
        .and_then(|_| w.flush())
        .map_err(io_err(log_path))?;

    if let Some(dir) = save {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (path, (c, wts)) in input
            .snapshot
            .iter()
            .zip(loaded.classifiers.into_iter().zip(loaded.weights))
        {
            let snap = Snapshot {
                classifier: c,
                evidence_weights: Some(wts),
                ..loaded.reference.clone()
            };
            let name = path
                .file_name()
                .map(PathBuf::from)
                .unwrap_or_else(|| "classifier.json".into());
            snap.save(&dir.join(name))?;
        }
    }
    let accuracy = truth.map(|_| {
        let hits = events
            .iter()
            .filter(|e| e.predicted.is_some() && e.predicted == e.truth)
            .count();
        percent(hits, events.len())
    });
    print_json(
        &StreamReport {
            summary: StreamSummary::from_events(&events),
            accuracy,
        },
        None,
    )
}

fn run_compare(cfg: &ExperimentConfig) -> Result<()> {
    let cmp = compare(cfg)?;
    let out = cfg
        .report
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("report"));
    let paths = emit_report(&cmp.report, &out, cfg.report.charts)?;
    for (scheme, events) in &cmp.events {
        let p = out.join(format!("events_{scheme}.jsonl"));
        let mut w = create(&p)?;
        write_events(&mut w, events)
            .and_then(|_| w.flush())
            .map_err(io_err(&p))?;
    }
    print!("{}", accuracy_table(&cmp.report));
    log::info!("report written to {}", paths.json.display());
    Ok(())
}

#[derive(Serialize)]
struct Fused {
    beliefs: Vec<f64>,
    residual: f64,
    predicted: usize,
}

fn run_fuse(path: &Path) -> Result<()> {
    let evidence = if path.as_os_str() == "-" {
        read_evidence(std::io::stdin().lock(), "<stdin>")?
    } else {
        let f = File::open(path).map_err(io_err(path))?;
        read_evidence(BufReader::new(f), &path.display().to_string())?
    };
    let b = fuse(&evidence)?;
    let predicted = b.argmax();
    println!(
        "{}",
        serde_json::to_string(&Fused {
            beliefs: b.beliefs,
            residual: b.residual,
            predicted,
        })?
    );
    Ok(())
}

fn synth(args: &ExperimentArgs, out: &Path) -> Result<()> {
    let cfg = load_config(args)?;
    let DataSource::Synth(s) = &cfg.dataset else {
        return Err(Error::Config(
            "synth needs a [dataset.synth] section".into(),
        ));
    };
    let d = synth_multimode(s, cfg.seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    save_csv(out, &d)?;
    write_text(
        &out.with_extension("manifest.toml"),
        &manifest_toml(&Manifest::build(&d, None))?,
    )
}
