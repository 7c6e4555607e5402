use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::reference::ReferenceCell;
use super::{ExperimentConfig, Scheme};
use crate::dataio::{Dataset, Manifest};
use crate::error::{Error, Result};
use crate::online::StreamSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAccuracy {
    pub mode: String,
    pub fault: String,
    pub correct: usize,
    pub total: usize,
    /// Percent.
    pub accuracy: f64,
}

/// Accuracy of one scheme over the test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub scheme: Scheme,
    pub classes: Vec<String>,
    pub modes: Vec<String>,
    /// One entry per `(mode, fault)` cell present in the test set, in
    /// `(mode, fault)` id order.
    pub cells: Vec<CellAccuracy>,
    /// Percent.
    pub overall_accuracy: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Samples with no prediction (fusion conflicts).
    pub unpredicted: usize,
    /// `evidence_weights[k][n]`: weight of base classifier `k` on class `n`.
    pub evidence_weights: Vec<Vec<f64>>,
    /// Static test accuracy (percent) of each base classifier.
    pub base_accuracies: Vec<f64>,
    pub stream: StreamSummary,
}

impl DiagnosisReport {
    /// Tabulate `predictions[i]` for test row `rows[i]` of `data`.
    pub(crate) fn tabulate(
        scheme: Scheme,
        data: &Dataset,
        rows: &[usize],
        predictions: &[Option<usize>],
    ) -> Self {
        let n = data.n_classes();
        let mut confusion = vec![vec![0usize; n]; n];
        let mut unpredicted = 0;
        let pred_of =
            |i: usize| predictions[rows.binary_search(&i).expect("row is in the test set")];
        for (&row, p) in rows.iter().zip(predictions) {
            match p {
                Some(p) => confusion[data.fault_labels[row]][*p] += 1,
                None => unpredicted += 1,
            }
        }
        let cells = data
            .cells(rows)
            .into_iter()
            .map(|((m, f), idx)| {
                let correct = idx.iter().filter(|&&i| pred_of(i) == Some(f)).count();
                CellAccuracy {
                    mode: data.mode_names[m].clone(),
                    fault: data.class_names[f].clone(),
                    correct,
                    total: idx.len(),
                    accuracy: percent(correct, idx.len()),
                }
            })
            .collect();
        let correct = rows
            .iter()
            .zip(predictions)
            .filter(|(&r, p)| **p == Some(data.fault_labels[r]))
            .count();
        DiagnosisReport {
            scheme,
            classes: data.class_names.clone(),
            modes: data.mode_names.clone(),
            cells,
            overall_accuracy: percent(correct, rows.len()),
            confusion,
            unpredicted,
            evidence_weights: Vec::new(),
            base_accuracies: Vec::new(),
            stream: StreamSummary::default(),
        }
    }

    pub fn cell(&self, mode: &str, fault: &str) -> Option<&CellAccuracy> {
        self.cells
            .iter()
            .find(|c| c.mode == mode && c.fault == fault)
    }
}

pub(crate) fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Everything `compare` produces, in machine-readable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub dataset: Manifest,
    pub reports: Vec<DiagnosisReport>,
    /// Published reference accuracies next to the measured ones, when the
    /// dataset labels can be matched to them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference: Vec<ReferenceCell>,
}

impl CompareReport {
    pub fn report(&self, scheme: Scheme) -> Option<&DiagnosisReport> {
        self.reports.iter().find(|r| r.scheme == scheme)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Faults as rows, one column per `(scheme, mode)`, accuracies to one decimal.
pub fn accuracy_table(report: &CompareReport) -> String {
    let Some(first) = report.reports.first() else {
        return "fault\n".to_string();
    };
    let modes = &first.modes;
    let mut out = String::from("fault");
    for r in &report.reports {
        for m in modes {
            write!(out, ",{}:{}", r.scheme, m).unwrap();
        }
    }
    out.push('\n');
    let faults: Vec<&String> = first
        .classes
        .iter()
        .filter(|f| {
            report
                .reports
                .iter()
                .any(|r| r.cells.iter().any(|c| &c.fault == *f))
        })
        .collect();
    for f in faults {
        out.push_str(f);
        for r in &report.reports {
            for m in modes {
                match r.cell(m, f) {
                    Some(c) => write!(out, ",{:.1}", c.accuracy).unwrap(),
                    None => out.push(','),
                }
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub json: PathBuf,
    pub table: PathBuf,
    pub charts: Vec<PathBuf>,
}

pub fn emit_report(report: &CompareReport, out_dir: &Path, charts: bool) -> Result<ReportPaths> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, body: &str| -> Result<PathBuf> {
        let p = out_dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    let json = write("report.json", &report.to_json()?)?;
    let table = write("accuracy_table.csv", &accuracy_table(report))?;
    let mut chart_paths = Vec::new();
    if charts {
        for r in &report.reports {
            let series: Vec<(String, Vec<Option<f64>>)> = r
                .modes
                .iter()
                .map(|m| {
                    let vals = r
                        .classes
                        .iter()
                        .map(|f| r.cell(m, f).map(|c| c.accuracy))
                        .collect();
                    (format!("mode {m}"), vals)
                })
                .collect();
            let svg = bar_chart_svg(
                &format!("{} accuracy per fault and mode (%)", r.scheme),
                &r.classes,
                &series,
                100.0,
            );
            chart_paths.push(write(&format!("accuracy_{}.svg", r.scheme), &svg)?);
            if !r.evidence_weights.is_empty() {
                let series: Vec<(String, Vec<Option<f64>>)> = r
                    .evidence_weights
                    .iter()
                    .enumerate()
                    .map(|(k, w)| {
                        (
                            format!("classifier {}", k + 1),
                            w.iter().map(|&v| Some(v)).collect(),
                        )
                    })
                    .collect();
                let svg = bar_chart_svg(
                    "evidence weight per classifier and class",
                    &r.classes,
                    &series,
                    1.0,
                );
                chart_paths.push(write(&format!("weights_{}.svg", r.scheme), &svg)?);
            }
        }
    }
    Ok(ReportPaths {
        json,
        table,
        charts: chart_paths,
    })
}

const PALETTE: [&str; 6] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1",
];

/// Grouped vertical bar chart; `None` values leave a gap.
fn bar_chart_svg(
    title: &str,
    categories: &[String],
    series: &[(String, Vec<Option<f64>>)],
    y_max: f64,
) -> String {
    let (left, top, plot_h, group_w) = (50.0, 40.0, 240.0, 24.0 + 14.0 * series.len() as f64);
    let bar_w = 12.0;
    let width = left + group_w * categories.len() as f64 + 140.0;
    let height = top + plot_h + 50.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{left}" y="20" font-size="13">{}</text>"#,
        escape(title)
    )
    .unwrap();
    for tick in 0..=4 {
        let v = y_max * tick as f64 / 4.0;
        let y = top + plot_h - plot_h * tick as f64 / 4.0;
        writeln!(
            s,
            r##"<line x1="{left}" x2="{:.1}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            width - 140.0,
            left - 4.0,
            y + 4.0,
            trim_float(v)
        )
        .unwrap();
    }
    for (ci, cat) in categories.iter().enumerate() {
        let gx = left + group_w * ci as f64 + 8.0;
        for (si, (_, vals)) in series.iter().enumerate() {
            if let Some(v) = vals.get(ci).copied().flatten() {
                let h = plot_h * (v / y_max).clamp(0.0, 1.0);
                writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="{bar_w}" height="{h:.1}" fill="{}"><title>{}: {v:.1}</title></rect>"#,
                    gx + 14.0 * si as f64,
                    top + plot_h - h,
                    PALETTE[si % PALETTE.len()],
                    escape(cat)
                )
                .unwrap();
            }
        }
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            gx + 7.0 * series.len() as f64,
            top + plot_h + 16.0,
            escape(cat)
        )
        .unwrap();
    }
    let lx = width - 130.0;
    for (si, (name, _)) in series.iter().enumerate() {
        let y = top + 16.0 * si as f64;
        writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{y:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            PALETTE[si % PALETTE.len()],
            lx + 14.0,
            y + 9.0,
            escape(name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::Matrix;

    fn data() -> Dataset {
        Dataset {
            features: Matrix::zeros(6, 1),
            fault_labels: vec![0, 1, 0, 1, 0, 1],
            mode_labels: vec![0, 0, 1, 1, 1, 1],
            class_names: vec!["IDV(0)".into(), "IDV(1)".into()],
            mode_names: vec!["1".into(), "2".into()],
            variable_names: vec!["x".into()],
        }
    }

    #[test]
    fn tabulate_counts_cells_and_confusion() {
        let d = data();
        let rows = vec![0, 1, 2, 3, 4, 5];
        let preds = vec![Some(0), Some(0), Some(0), None, Some(1), Some(1)];
        let r = DiagnosisReport::tabulate(Scheme::Ours, &d, &rows, &preds);
        assert_eq!(r.cells.len(), 4);
        let c = r.cell("2", "IDV(0)").unwrap();
        assert_eq!((c.correct, c.total), (1, 2));
        assert_eq!(c.accuracy, 50.0);
        assert_eq!(r.unpredicted, 1);
        assert_eq!(r.confusion, vec![vec![2, 1], vec![1, 1]]);
        assert!((r.overall_accuracy - 50.0).abs() < 1e-12);
    }

    #[test]
    fn table_layout() {
        let d = data();
        let rows = vec![0, 1, 2, 3, 4, 5];
        let preds = vec![Some(0); 6];
        let cfg = ExperimentConfig::default();
        let report = CompareReport {
            seed: 0,
            config: cfg,
            dataset: Manifest::build(&d, None),
            reports: vec![
                DiagnosisReport::tabulate(Scheme::Ours, &d, &rows, &preds),
                DiagnosisReport::tabulate(Scheme::Scheme1, &d, &rows, &preds),
            ],
            reference: vec![],
        };
        let t = accuracy_table(&report);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "fault,ours:1,ours:2,scheme1:1,scheme1:2");
        assert_eq!(lines.len(), 1 + 2);
        assert_eq!(lines[1], "IDV(0),100.0,100.0,100.0,100.0");
        assert_eq!(lines[2], "IDV(1),0.0,0.0,0.0,0.0");

        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&report, dir.path(), true).unwrap();
        assert_eq!(paths.charts.len(), 2);
        let svg = std::fs::read_to_string(&paths.charts[0]).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let back: CompareReport =
            serde_json::from_str(&std::fs::read_to_string(&paths.json).unwrap()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let d = data();
        let report = CompareReport {
            seed: 0,
            config: ExperimentConfig::default(),
            dataset: Manifest::build(&d, None),
            reports: vec![],
            reference: vec![],
        };
        let file = tempfile::NamedTempFile::new().unwrap();
        let err = emit_report(&report, &file.path().join("sub"), false).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
