//! Labeled classification data.
//!
//! Features live in a [`DesignMatrix`], stored either dense row-major or as
//! compressed sparse rows. Labels are 0-based class indices; the highest index
//! `C - 1` is the reference class whose weights are pinned to zero by the
//! softmax model.
//!
//! Readers cover the LIBSVM text format (`label idx:val ...`, 1-based indices)
//! and dense CSV with the label in the last column. Files ending in `.gz` are
//! decompressed transparently.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::rng::{stream_rng, Purpose};

/// Density above which [`StoragePolicy::Auto`] keeps features dense.
pub const DENSE_THRESHOLD: f64 = 0.25;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

impl DataError {
    fn invalid(msg: impl Into<String>) -> Self {
        DataError::Invalid(msg.into())
    }
}

/// Storage layout for a [`DesignMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    /// Row-major `n_rows * n_cols` values.
    Dense(Vec<f64>),
    /// Compressed sparse rows.
    Sparse {
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StoragePolicy {
    /// Dense when the fraction of stored non-zeros exceeds [`DENSE_THRESHOLD`].
    #[default]
    Auto,
    Dense,
    Sparse,
}

/// A borrowed row of a design matrix.
#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    Dense(&'a [f64]),
    Sparse {
        indices: &'a [usize],
        values: &'a [f64],
    },
}

impl<'a> Row<'a> {
    /// Calls `f(column, value)` for every stored entry.
    #[inline]
    pub fn for_each(&self, mut f: impl FnMut(usize, f64)) {
        match *self {
            Row::Dense(vals) => {
                for (j, &v) in vals.iter().enumerate() {
                    f(j, v);
                }
            }
            Row::Sparse { indices, values } => {
                for (&j, &v) in indices.iter().zip(values) {
                    f(j, v);
                }
            }
        }
    }

    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        match *self {
            Row::Dense(vals) => vals.iter().zip(x).map(|(a, b)| a * b).sum(),
            Row::Sparse { indices, values } => {
                indices.iter().zip(values).map(|(&j, &v)| v * x[j]).sum()
            }
        }
    }

    /// `y += alpha * row`
    #[inline]
    pub fn axpy(&self, alpha: f64, y: &mut [f64]) {
        self.for_each(|j, v| y[j] += alpha * v);
    }

    pub fn nnz(&self) -> usize {
        match *self {
            Row::Dense(vals) => vals.len(),
            Row::Sparse { indices, .. } => indices.len(),
        }
    }
}

/// `n_rows x n_cols` feature matrix; row `i` is data point `a_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n_rows: usize,
    n_cols: usize,
    storage: Storage,
}

impl DesignMatrix {
    pub fn dense(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self, DataError> {
        if data.len() != n_rows * n_cols {
            return Err(DataError::invalid(format!(
                "dense data has {} values, expected {n_rows} x {n_cols}",
                data.len()
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            storage: Storage::Dense(data),
        })
    }

    /// Builds a CSR matrix, checking the offset and index invariants.
    pub fn csr(
        n_rows: usize,
        n_cols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, DataError> {
        if offsets.len() != n_rows + 1 {
            return Err(DataError::invalid(format!(
                "CSR offsets have length {}, expected {}",
                offsets.len(),
                n_rows + 1
            )));
        }
        if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(DataError::invalid(
                "CSR offsets must start at 0 and be non-decreasing",
            ));
        }
        if *offsets.last().unwrap() != values.len() || indices.len() != values.len() {
            return Err(DataError::invalid(
                "final CSR offset must equal the number of stored values",
            ));
        }
        if let Some(&j) = indices.iter().find(|&&j| j >= n_cols) {
            return Err(DataError::invalid(format!(
                "column index {j} out of range for {n_cols} columns"
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            storage: Storage::Sparse {
                offsets,
                indices,
                values,
            },
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], n_cols: usize) -> Result<Self, DataError> {
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(DataError::invalid(format!(
                    "row {i} has {} values, expected {n_cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::dense(rows.len(), n_cols, data)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(d) => d.iter().filter(|v| **v != 0.0).count(),
            Storage::Sparse { values, .. } => values.len(),
        }
    }

    pub fn density(&self) -> f64 {
        let cells = self.n_rows * self.n_cols;
        if cells == 0 {
            0.0
        } else {
            self.nnz() as f64 / cells as f64
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> Row<'_> {
        match &self.storage {
            Storage::Dense(d) => Row::Dense(&d[i * self.n_cols..(i + 1) * self.n_cols]),
            Storage::Sparse {
                offsets,
                indices,
                values,
            } => {
                let (s, e) = (offsets[i], offsets[i + 1]);
                Row::Sparse {
                    indices: &indices[s..e],
                    values: &values[s..e],
                }
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.row(i) {
            Row::Dense(vals) => vals[j],
            Row::Sparse { indices, values } => indices
                .iter()
                .position(|&c| c == j)
                .map_or(0.0, |k| values[k]),
        }
    }

    /// `A v`
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_cols, "matvec: dimension mismatch");
        (0..self.n_rows).map(|i| self.row(i).dot(v)).collect()
    }

    /// `A^T u`
    pub fn transpose_matvec(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n_rows, "transpose_matvec: dimension mismatch");
        let mut out = vec![0.0; self.n_cols];
        for (i, &ui) in u.iter().enumerate() {
            self.row(i).axpy(ui, &mut out);
        }
        out
    }

    pub fn to_dense(&self) -> DesignMatrix {
        match &self.storage {
            Storage::Dense(_) => self.clone(),
            Storage::Sparse { .. } => {
                let mut data = vec![0.0; self.n_rows * self.n_cols];
                for i in 0..self.n_rows {
                    let out = &mut data[i * self.n_cols..(i + 1) * self.n_cols];
                    self.row(i).for_each(|j, v| out[j] += v);
                }
                DesignMatrix {
                    n_rows: self.n_rows,
                    n_cols: self.n_cols,
                    storage: Storage::Dense(data),
                }
            }
        }
    }

    pub fn to_sparse(&self) -> DesignMatrix {
        match &self.storage {
            Storage::Sparse { .. } => self.clone(),
            Storage::Dense(data) => {
                let mut offsets = Vec::with_capacity(self.n_rows + 1);
                let mut indices = Vec::new();
                let mut values = Vec::new();
                offsets.push(0);
                for row in data.chunks(self.n_cols.max(1)).take(self.n_rows) {
                    for (j, &v) in row.iter().enumerate() {
                        if v != 0.0 {
                            indices.push(j);
                            values.push(v);
                        }
                    }
                    offsets.push(values.len());
                }
                // n_cols == 0 leaves no chunks; pad the offsets.
                offsets.resize(self.n_rows + 1, values.len());
                DesignMatrix {
                    n_rows: self.n_rows,
                    n_cols: self.n_cols,
                    storage: Storage::Sparse {
                        offsets,
                        indices,
                        values,
                    },
                }
            }
        }
    }

    pub fn with_policy(self, policy: StoragePolicy) -> DesignMatrix {
        match policy {
            StoragePolicy::Dense => self.to_dense(),
            StoragePolicy::Sparse => self.to_sparse(),
            StoragePolicy::Auto => {
                if self.density() > DENSE_THRESHOLD {
                    self.to_dense()
                } else {
                    self.to_sparse()
                }
            }
        }
    }

    pub fn column_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            self.row(i).for_each(|j, v| sq[j] += v * v);
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    /// Divides column `j` by `divisors[j]`, skipping zero divisors.
    pub fn divide_columns(&mut self, divisors: &[f64]) {
        assert_eq!(divisors.len(), self.n_cols);
        match &mut self.storage {
            Storage::Dense(data) => {
                for row in data.chunks_mut(self.n_cols.max(1)) {
                    for (v, &d) in row.iter_mut().zip(divisors) {
                        if d != 0.0 {
                            *v /= d;
                        }
                    }
                }
            }
            Storage::Sparse {
                indices, values, ..
            } => {
                for (v, &j) in values.iter_mut().zip(indices.iter()) {
                    let d = divisors[j];
                    if d != 0.0 {
                        *v /= d;
                    }
                }
            }
        }
    }

    /// Multiplies every stored value by `factor`.
    pub fn scale(&mut self, factor: f64) {
        let vals = match &mut self.storage {
            Storage::Dense(d) => d,
            Storage::Sparse { values, .. } => values,
        };
        vals.iter_mut().for_each(|v| *v *= factor);
    }

    /// Gathers the given rows (in the given order) into a new matrix of the same layout.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        match &self.storage {
            Storage::Dense(data) => {
                let mut out = Vec::with_capacity(rows.len() * self.n_cols);
                for &i in rows {
                    out.extend_from_slice(&data[i * self.n_cols..(i + 1) * self.n_cols]);
                }
                DesignMatrix {
                    n_rows: rows.len(),
                    n_cols: self.n_cols,
                    storage: Storage::Dense(out),
                }
            }
            Storage::Sparse {
                offsets,
                indices,
                values,
            } => {
                let mut new_offsets = Vec::with_capacity(rows.len() + 1);
                let mut new_indices = Vec::new();
                let mut new_values = Vec::new();
                new_offsets.push(0);
                for &i in rows {
                    let (s, e) = (offsets[i], offsets[i + 1]);
                    new_indices.extend_from_slice(&indices[s..e]);
                    new_values.extend_from_slice(&values[s..e]);
                    new_offsets.push(new_values.len());
                }
                DesignMatrix {
                    n_rows: rows.len(),
                    n_cols: self.n_cols,
                    storage: Storage::Sparse {
                        offsets: new_offsets,
                        indices: new_indices,
                        values: new_values,
                    },
                }
            }
        }
    }
}

/// Features plus 0-based class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: DesignMatrix,
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        features: DesignMatrix,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self, DataError> {
        if n_classes < 2 {
            return Err(DataError::invalid(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if labels.len() != features.n_rows() {
            return Err(DataError::invalid(format!(
                "{} labels for {} rows",
                labels.len(),
                features.n_rows()
            )));
        }
        if let Some(&b) = labels.iter().find(|&&b| b >= n_classes) {
            return Err(DataError::invalid(format!(
                "label {b} outside 0..{n_classes}"
            )));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
        })
    }

    pub fn features(&self) -> &DesignMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    pub fn select(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &b in &self.labels {
            counts[b] += 1;
        }
        counts
    }

    pub fn with_policy(self, policy: StoragePolicy) -> Self {
        Self {
            features: self.features.with_policy(policy),
            ..self
        }
    }

    pub fn map_features(self, f: impl FnOnce(DesignMatrix) -> DesignMatrix) -> Self {
        Self {
            features: f(self.features),
            ..self
        }
    }
}

/// A selection of rows of a dataset, in evaluation order. Indices may repeat
/// (sampling with replacement).
#[derive(Debug, Clone, Copy)]
pub enum RowSet<'a> {
    All(usize),
    Subset(&'a [usize]),
}

impl<'a> RowSet<'a> {
    pub fn len(&self) -> usize {
        match self {
            RowSet::All(n) => *n,
            RowSet::Subset(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, k: usize) -> usize {
        match self {
            RowSet::All(_) => k,
            RowSet::Subset(s) => s[k],
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub n_classes: usize,
    /// Raw label values in class-index order. When absent, the sorted distinct
    /// labels found in the file are used.
    pub class_labels: Option<Vec<f64>>,
    /// Feature count; defaults to the largest index seen.
    pub n_features: Option<usize>,
    pub storage: StoragePolicy,
}

impl LoadOptions {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            ..Default::default()
        }
    }
}

fn open_maybe_gz(path: &Path) -> Result<Box<dyn BufRead>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        context: format!("opening {}", path.display()),
        source,
    })?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(reader)))
}

/// Maps raw label values onto `0..n_classes`.
fn build_class_map(raw: &[f64], opts: &LoadOptions) -> Result<Vec<f64>, DataError> {
    if opts.n_classes < 2 {
        return Err(DataError::invalid(format!(
            "need at least 2 classes, got {}",
            opts.n_classes
        )));
    }
    let classes = match &opts.class_labels {
        Some(c) => {
            if c.len() != opts.n_classes {
                return Err(DataError::invalid(format!(
                    "{} class labels declared for {} classes",
                    c.len(),
                    opts.n_classes
                )));
            }
            c.clone()
        }
        None => {
            let mut sorted = raw.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            if sorted.len() > opts.n_classes {
                return Err(DataError::invalid(format!(
                    "found {} distinct labels but {} classes were declared",
                    sorted.len(),
                    opts.n_classes
                )));
            }
            sorted
        }
    };
    Ok(classes)
}

fn map_labels(
    raw: &[f64],
    raw_lines: &[usize],
    classes: &[f64],
    source_name: &str,
) -> Result<Vec<usize>, DataError> {
    raw.iter()
        .zip(raw_lines)
        .map(|(&v, &line)| {
            classes.iter().position(|&c| c == v).ok_or_else(|| {
                DataError::invalid(format!(
                    "{source_name}:{line}: label {v} is not in the declared class set {classes:?}"
                ))
            })
        })
        .collect()
}

/// Reads a LIBSVM file with the sorted distinct labels as classes.
pub fn load_libsvm(path: impl AsRef<Path>, n_classes: usize) -> Result<LabeledDataset, DataError> {
    load_libsvm_with(path, &LoadOptions::new(n_classes))
}

pub fn load_libsvm_with(
    path: impl AsRef<Path>,
    opts: &LoadOptions,
) -> Result<LabeledDataset, DataError> {
    let path = path.as_ref();
    let reader = open_maybe_gz(path)?;
    parse_libsvm(reader, &path.display().to_string(), opts)
}

pub fn parse_libsvm<R: BufRead>(
    reader: R,
    source_name: &str,
    opts: &LoadOptions,
) -> Result<LabeledDataset, DataError> {
    let parse_err = |line: usize, msg: String| DataError::Parse {
        source_name: source_name.to_string(),
        line,
        msg,
    };
    let mut raw_labels = Vec::new();
    let mut raw_lines = Vec::new();
    let mut offsets = vec![0usize];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut max_index = 0usize;
    let mut entries: Vec<(usize, f64)> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|source| DataError::Io {
            context: format!("reading {source_name} at line {lineno}"),
            source,
        })?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap();
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(lineno, format!("invalid label '{label_tok}'")))?;
        entries.clear();
        for tok in tokens {
            if tok.starts_with("qid:") {
                continue;
            }
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected idx:val, got '{tok}'")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, format!("invalid feature index '{idx}'")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "feature indices are 1-based".to_string()));
            }
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(lineno, format!("invalid feature value '{val}'")))?;
            entries.push((idx - 1, val));
        }
        entries.sort_by_key(|e| e.0);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(parse_err(
                lineno,
                format!("duplicate feature index {}", w[0].0 + 1),
            ));
        }
        for &(j, v) in &entries {
            max_index = max_index.max(j + 1);
            if v != 0.0 {
                indices.push(j);
                values.push(v);
            }
        }
        offsets.push(values.len());
        raw_labels.push(label);
        raw_lines.push(lineno);
    }

    let n_cols = match opts.n_features {
        Some(p) if p < max_index => {
            return Err(DataError::invalid(format!(
                "{source_name}: feature index {max_index} exceeds declared dimension {p}"
            )))
        }
        Some(p) => p,
        None => max_index,
    };
    let classes = build_class_map(&raw_labels, opts)?;
    let labels = map_labels(&raw_labels, &raw_lines, &classes, source_name)?;
    let n_rows = labels.len();
    let features =
        DesignMatrix::csr(n_rows, n_cols, offsets, indices, values)?.with_policy(opts.storage);
    LabeledDataset::new(features, labels, opts.n_classes)
}

/// Writes class indices as labels and 1-based `idx:val` pairs, values in
/// shortest round-trip form.
pub fn save_libsvm(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        context: format!("writing {}", path.display()),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_libsvm(ds, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_libsvm<W: Write>(ds: &LabeledDataset, w: &mut W) -> io::Result<()> {
    for i in 0..ds.n_rows() {
        write!(w, "{}", ds.labels[i])?;
        let mut res = Ok(());
        ds.features.row(i).for_each(|j, v| {
            if v != 0.0 && res.is_ok() {
                res = write!(w, " {}:{}", j + 1, v);
            }
        });
        res?;
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a dense CSV (no header, label in the last column).
pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<LabeledDataset, DataError> {
    let path = path.as_ref();
    let reader = open_maybe_gz(path)?;
    parse_csv(reader, &path.display().to_string(), opts)
}

pub fn parse_csv<R: Read>(
    reader: R,
    source_name: &str,
    opts: &LoadOptions,
) -> Result<LabeledDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut data = Vec::new();
    let mut raw_labels = Vec::new();
    let mut raw_lines = Vec::new();
    let mut n_cols: Option<usize> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| DataError::Parse {
            source_name: source_name.to_string(),
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |msg: String| DataError::Parse {
            source_name: source_name.to_string(),
            line,
            msg,
        };
        if record.len() < 2 {
            return Err(parse_err("need at least one feature and a label".into()));
        }
        let p = record.len() - 1;
        match n_cols {
            None => n_cols = Some(p),
            Some(q) if q != p => {
                return Err(parse_err(format!("expected {} features, found {p}", q)))
            }
            _ => {}
        }
        for field in record.iter().take(p) {
            let v: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(format!("invalid feature value '{field}'")))?;
            data.push(v);
        }
        let lab = &record[p];
        let label: f64 = lab
            .parse()
            .ok()
            .filter(|v: &f64| v.fract() == 0.0)
            .ok_or_else(|| parse_err(format!("label '{lab}' is not an integer")))?;
        raw_labels.push(label);
        raw_lines.push(line);
    }
    let p = match (n_cols, opts.n_features) {
        (Some(p), Some(q)) if p != q => {
            return Err(DataError::invalid(format!(
                "{source_name}: file has {p} features, {q} declared"
            )))
        }
        (Some(p), _) => p,
        (None, q) => q.unwrap_or(0),
    };
    let classes = build_class_map(&raw_labels, opts)?;
    let labels = map_labels(&raw_labels, &raw_lines, &classes, source_name)?;
    let features = DesignMatrix::dense(labels.len(), p, data)?.with_policy(opts.storage);
    LabeledDataset::new(features, labels, opts.n_classes)
}

/// Scales every column with non-zero norm to unit Euclidean norm.
pub fn normalize_columns(ds: LabeledDataset) -> LabeledDataset {
    ds.map_features(|mut a| {
        let norms = a.column_norms();
        a.divide_columns(&norms);
        a
    })
}

/// Seeded random partition into `ceil(f * n)` training rows and the rest.
/// Each part keeps the original row order.
pub fn train_test_split(
    ds: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = ds.n_rows();
    if n < 2 {
        return Err(DataError::invalid(format!(
            "cannot split a dataset with {n} rows"
        )));
    }
    let n_train = ((train_fraction * n as f64).ceil() as usize).min(n);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(seed, Purpose::Split, 0));
    let (train, test) = perm.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.select(train), ds.select(test)))
}

/// Draws `size` rows keeping class proportions (largest-remainder rounding).
pub fn stratified_subsample(
    ds: &LabeledDataset,
    size: usize,
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    let n = ds.n_rows();
    if size > n {
        return Err(DataError::invalid(format!(
            "cannot draw {size} rows from {n}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for (i, &b) in ds.labels().iter().enumerate() {
        by_class[b].push(i);
    }
    let exact: Vec<f64> = by_class
        .iter()
        .map(|rows| size as f64 * rows.len() as f64 / n.max(1) as f64)
        .collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut missing = size - quota.iter().sum::<usize>();
    for c in order {
        if missing == 0 {
            break;
        }
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }
    let mut chosen = Vec::with_capacity(size);
    for (c, rows) in by_class.iter_mut().enumerate() {
        rows.shuffle(&mut stream_rng(seed, Purpose::Subsample, c as u64));
        chosen.extend_from_slice(&rows[..quota[c]]);
    }
    chosen.sort_unstable();
    Ok(ds.select(&chosen))
}
