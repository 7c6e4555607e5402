//! Dataset ingestion, z-score standardization, stratified splitting, one-hot
//! targets, and a synthetic multi-mode generator.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Matrix;

/// Standard deviations are floored here so constant columns map to zero.
pub const STDEV_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub fault_labels: Vec<usize>,
    pub mode_labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub mode_names: Vec<String>,
    pub variable_names: Vec<String>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let n = self.features.rows();
        if self.fault_labels.len() != n || self.mode_labels.len() != n {
            return Err(Error::Argument(format!(
                "dataset: {n} rows but {} fault and {} mode labels",
                self.fault_labels.len(),
                self.mode_labels.len()
            )));
        }
        if self.variable_names.len() != self.features.cols() {
            return Err(Error::Argument(
                "dataset: variable name count != column count".into(),
            ));
        }
        if let Some(&l) = self
            .fault_labels
            .iter()
            .find(|&&l| l >= self.class_names.len())
        {
            return Err(Error::Argument(format!(
                "dataset: fault id {l} has no class name"
            )));
        }
        if let Some(&m) = self
            .mode_labels
            .iter()
            .find(|&&m| m >= self.mode_names.len())
        {
            return Err(Error::Argument(format!(
                "dataset: mode id {m} has no mode name"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_modes(&self) -> usize {
        self.mode_names.len()
    }

    /// Rows at `idx`, in order, keeping the label vocabularies.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            fault_labels: idx.iter().map(|&i| self.fault_labels[i]).collect(),
            mode_labels: idx.iter().map(|&i| self.mode_labels[i]).collect(),
            class_names: self.class_names.clone(),
            mode_names: self.mode_names.clone(),
            variable_names: self.variable_names.clone(),
        }
    }

    /// Row indices grouped by `(mode, fault)`, in key order.
    pub fn cells(&self, idx: &[usize]) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for &i in idx {
            cells
                .entry((self.mode_labels[i], self.fault_labels[i]))
                .or_default()
                .push(i);
        }
        cells
    }
}

/// Column layout of a delimiter-separated dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub delimiter: char,
    pub fault_column: String,
    pub mode_column: String,
    /// Feature columns in order; `None` takes every other column.
    pub feature_columns: Option<Vec<String>>,
    /// Declared fault vocabulary; labels outside it are rejected.
    pub classes: Option<Vec<String>>,
    /// Declared mode vocabulary; labels outside it are rejected.
    pub modes: Option<Vec<String>>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            delimiter: ',',
            fault_column: "fault".into(),
            mode_column: "mode".into(),
            feature_columns: None,
            classes: None,
            modes: None,
        }
    }
}

impl Schema {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn delimiter_byte(&self) -> Result<u8> {
        u8::try_from(self.delimiter)
            .ok()
            .filter(u8::is_ascii)
            .ok_or_else(|| Error::Config(format!("delimiter {:?} is not ASCII", self.delimiter)))
    }
}

struct Vocabulary {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    closed: bool,
}

impl Vocabulary {
    fn new(declared: Option<&Vec<String>>) -> Self {
        let names = declared.cloned().unwrap_or_default();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Vocabulary {
            names,
            index,
            closed: declared.is_some(),
        }
    }

    fn id(&mut self, label: &str) -> Option<usize> {
        if let Some(&i) = self.index.get(label) {
            return Some(i);
        }
        if self.closed {
            return None;
        }
        let i = self.names.len();
        self.names.push(label.to_string());
        self.index.insert(label.to_string(), i);
        Some(i)
    }
}

/// Parse a header-led delimiter-separated file.
///
/// Labels are re-indexed densely: declared vocabularies keep their order,
/// otherwise ids follow first appearance.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, &path.display().to_string(), schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, source: &str, schema: &Schema) -> Result<Dataset> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_byte()?)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("header has no column {name:?}")))
    };
    let fault_col = col(&schema.fault_column)?;
    let mode_col = col(&schema.mode_column)?;
    let feature_cols: Vec<usize> = match &schema.feature_columns {
        Some(names) => names.iter().map(|n| col(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&i| i != fault_col && i != mode_col)
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(parse_err(1, "no feature columns".into()));
    }

    let mut classes = Vocabulary::new(schema.classes.as_ref());
    let mut modes = Vocabulary::new(schema.modes.as_ref());
    let mut data = Vec::new();
    let mut fault_labels = Vec::new();
    let mut mode_labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        for &c in &feature_cols {
            let v: f64 = rec[c].parse().map_err(|_| {
                parse_err(
                    line,
                    format!("column {:?}: non-numeric value {:?}", header[c], &rec[c]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    line,
                    format!("column {:?}: non-finite value", header[c]),
                ));
            }
            data.push(v);
        }
        let fault = classes
            .id(&rec[fault_col])
            .ok_or_else(|| parse_err(line, format!("unknown fault label {:?}", &rec[fault_col])))?;
        let mode = modes
            .id(&rec[mode_col])
            .ok_or_else(|| parse_err(line, format!("unknown mode label {:?}", &rec[mode_col])))?;
        fault_labels.push(fault);
        mode_labels.push(mode);
    }
    let rows = fault_labels.len();
    let d = Dataset {
        features: Matrix::new(rows, feature_cols.len(), data)?,
        fault_labels,
        mode_labels,
        class_names: classes.names,
        mode_names: modes.names,
        variable_names: feature_cols.iter().map(|&c| header[c].clone()).collect(),
    };
    d.validate()?;
    Ok(d)
}

/// Write `d` with the header `variables…, fault, mode`.
pub fn write_csv<W: std::io::Write>(writer: W, d: &Dataset, delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(writer);
    let csv_err = |e: csv::Error| Error::Argument(format!("csv write: {e}"));
    let mut header = d.variable_names.clone();
    header.push("fault".into());
    header.push("mode".into());
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in d.features.row_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(d.class_names[d.fault_labels[i]].clone());
        rec.push(d.mode_names[d.mode_labels[i]].clone());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| Error::Argument(format!("csv write: {e}")))?;
    Ok(())
}

pub fn save_csv(path: &Path, d: &Dataset) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), d, b',')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stdevs: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation over the `train` rows.
    pub fn fit(d: &Dataset, train: &[usize]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Argument("standardizer: empty training mask".into()));
        }
        let cols = d.features.cols();
        let n = train.len() as f64;
        let mut means = vec![0.0; cols];
        for &i in train {
            for (m, v) in means.iter_mut().zip(d.features.row(i)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; cols];
        for &i in train {
            for ((s, v), m) in vars.iter_mut().zip(d.features.row(i)).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stdevs = vars
            .iter()
            .map(|s| (s / n).sqrt().max(STDEV_FLOOR))
            .collect();
        Ok(Standardizer { means, stdevs })
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.stdevs)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn apply_matrix(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.means.len() {
            return Err(Error::Shape {
                op: "standardize",
                left: x.shape(),
                right: (1, self.means.len()),
            });
        }
        let data = x.row_iter().flat_map(|r| self.apply_row(r)).collect();
        Matrix::new(x.rows(), x.cols(), data)
    }

    /// Not idempotent: applying twice re-centres already centred data.
    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        Ok(Dataset {
            features: self.apply_matrix(&d.features)?,
            ..d.clone()
        })
    }
}

pub fn fit_standardizer(d: &Dataset, train: &[usize]) -> Result<Standardizer> {
    Standardizer::fit(d, train)
}

pub fn apply_standardizer(s: &Standardizer, d: &Dataset) -> Result<Dataset> {
    s.apply(d)
}

/// Disjoint, exhaustive train/test row indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split over every row of `d`.
pub fn split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<Split> {
    let all: Vec<usize> = (0..d.len()).collect();
    split_rows(d, &all, train_fraction, seed)
}

/// Stratified split of the rows listed in `rows`.
///
/// Each `(mode, fault)` cell contributes `⌊fraction·count⌋` training rows,
/// at least one and at most `count − 1`.
pub fn split_rows(d: &Dataset, rows: &[usize], train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for ((mode, fault), mut idx) in d.cells(rows) {
        let count = idx.len();
        if count < 2 {
            return Err(Error::Stratification {
                mode: d.mode_names[mode].clone(),
                fault: d.class_names[fault].clone(),
                count,
            });
        }
        idx.shuffle(&mut rng);
        let n_train = ((train_fraction * count as f64).floor() as usize).clamp(1, count - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Matrix> {
    let mut m = vec![0.0; labels.len() * n_classes];
    for (r, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::Argument(format!(
                "label {l} out of range for {n_classes} classes"
            )));
        }
        m[r * n_classes + l] = 1.0;
    }
    Matrix::new(labels.len(), n_classes, m)
}

/// Two classes whose class directions trade places in some modes.
///
/// Pooled over modes the pair then has coincident means, which a pooled
/// classifier can only untangle through the mode offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwappedPair {
    pub classes: [usize; 2],
    pub modes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_modes: usize,
    pub n_classes: usize,
    pub samples_per_cell: usize,
    pub n_features: usize,
    /// Distance of each mode centre from the origin.
    pub mode_offset: f64,
    /// Distance of each class centre from its mode centre.
    pub separation: f64,
    /// Per-feature Gaussian noise standard deviation.
    pub noise: f64,
    /// Centre shift per time step along a per-mode drift direction.
    pub drift_rate: f64,
    pub swapped_pair: Option<SwappedPair>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_modes: 4,
            n_classes: 7,
            samples_per_cell: 50,
            n_features: 20,
            mode_offset: 10.0,
            separation: 8.0,
            noise: 1.0,
            drift_rate: 0.0,
            swapped_pair: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_modes", self.n_modes),
            ("n_classes", self.n_classes),
            ("samples_per_cell", self.samples_per_cell),
            ("n_features", self.n_features),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, c)| *c == 0) {
            return Err(Error::Argument(format!("synth: {name} must be positive")));
        }
        let reals = [
            ("mode_offset", self.mode_offset),
            ("separation", self.separation),
            ("noise", self.noise),
            ("drift_rate", self.drift_rate),
        ];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Argument(format!(
                "synth: {name} must be >= 0, got {v}"
            )));
        }
        if let Some(p) = &self.swapped_pair {
            if p.classes.iter().any(|&c| c >= self.n_classes) || p.classes[0] == p.classes[1] {
                return Err(Error::Argument(format!(
                    "synth: bad swapped classes {:?}",
                    p.classes
                )));
            }
            if p.modes.iter().any(|&m| m >= self.n_modes) {
                return Err(Error::Argument(format!(
                    "synth: bad swapped modes {:?}",
                    p.modes
                )));
            }
        }
        Ok(())
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Gaussian clusters at `mode_offset·r_m + separation·u_c (+ drift·t·d_m)`.
///
/// Rows are time-major: time step `t` holds one sample of every
/// `(mode, class)` cell, modes outermost.
pub fn synth_multimode(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let dim = cfg.n_features;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mode_dirs: Vec<Vec<f64>> = (0..cfg.n_modes)
        .map(|_| unit_vector(&mut rng, dim))
        .collect();
    let class_dirs: Vec<Vec<f64>> = (0..cfg.n_classes)
        .map(|_| unit_vector(&mut rng, dim))
        .collect();
    let drift_dirs: Vec<Vec<f64>> = (0..cfg.n_modes)
        .map(|_| unit_vector(&mut rng, dim))
        .collect();

    let class_in_mode = |class: usize, mode: usize| -> usize {
        match &cfg.swapped_pair {
            Some(p) if p.modes.contains(&mode) => {
                if class == p.classes[0] {
                    p.classes[1]
                } else if class == p.classes[1] {
                    p.classes[0]
                } else {
                    class
                }
            }
            _ => class,
        }
    };

    let n = cfg.n_modes * cfg.n_classes * cfg.samples_per_cell;
    let mut data = Vec::with_capacity(n * dim);
    let mut fault_labels = Vec::with_capacity(n);
    let mut mode_labels = Vec::with_capacity(n);
    for t in 0..cfg.samples_per_cell {
        for mode in 0..cfg.n_modes {
            for class in 0..cfg.n_classes {
                let dir = &class_dirs[class_in_mode(class, mode)];
                for j in 0..dim {
                    let centre = cfg.mode_offset * mode_dirs[mode][j]
                        + cfg.separation * dir[j]
                        + cfg.drift_rate * t as f64 * drift_dirs[mode][j];
                    let eps: f64 = rng.sample(StandardNormal);
                    data.push(centre + cfg.noise * eps);
                }
                fault_labels.push(class);
                mode_labels.push(mode);
            }
        }
    }
    let d = Dataset {
        features: Matrix::new(n, dim, data)?,
        fault_labels,
        mode_labels,
        class_names: (0..cfg.n_classes).map(|c| format!("F{c}")).collect(),
        mode_names: (1..=cfg.n_modes).map(|m| m.to_string()).collect(),
        variable_names: (1..=dim).map(|j| format!("x{j}")).collect(),
    };
    d.validate()?;
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCount {
    pub mode: String,
    pub fault: String,
    pub count: usize,
}

/// Label maps, cell counts and (optionally) standardizer parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub rows: usize,
    pub variables: Vec<String>,
    /// Dense fault id → original label.
    pub classes: Vec<String>,
    /// Dense mode id → original label.
    pub modes: Vec<String>,
    pub cells: Vec<CellCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardizer: Option<Standardizer>,
}

impl Manifest {
    pub fn build(d: &Dataset, standardizer: Option<&Standardizer>) -> Self {
        let all: Vec<usize> = (0..d.len()).collect();
        let cells = d
            .cells(&all)
            .into_iter()
            .map(|((m, f), idx)| CellCount {
                mode: d.mode_names[m].clone(),
                fault: d.class_names[f].clone(),
                count: idx.len(),
            })
            .collect();
        Manifest {
            rows: d.len(),
            variables: d.variable_names.clone(),
            classes: d.class_names.clone(),
            modes: d.mode_names.clone(),
            cells,
            standardizer: standardizer.cloned(),
        }
    }
}
