//! Labeled sparse examples, SVMlight-style ingestion, splitting and feature
//! preprocessing.
//!
//! The text format is one example per line:
//!
//! ```text
//! +1 1:0.5 3:2.0   # trailing comments are ignored
//! 0 2:1.0
//! ```
//!
//! Labels `1`/`+1` become the positive class, `0`/`-1` the negative class.
//! Feature indices are 1-based in the file and 0-based in memory.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::rng::{stream, Stream};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dataset `{0}` contains no examples")]
    Empty(String),
    #[error("feature index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("feature indices must be strictly increasing")]
    UnsortedIndices,
    #[error("non-finite feature value")]
    NonFinite,
    #[error("split of {train}+{test} examples does not fit a dataset of {n}")]
    SplitTooLarge { train: usize, test: usize, n: usize },
    #[error("split sizes must be positive")]
    EmptySplit,
    #[error("cannot keep {k} of {dim} features")]
    TooManyFeatures { k: usize, dim: usize },
    #[error("label has zero variance: only one class present")]
    SingleClass,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_sign(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    /// `-1` or `+1`.
    pub fn as_i8(self) -> i8 {
        match self {
            Label::Negative => -1,
            Label::Positive => 1,
        }
    }

    pub fn value<T: Scalar>(self) -> T {
        match self {
            Label::Negative => -T::one(),
            Label::Positive => T::one(),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }
}

/// Sparse vector with strictly increasing 0-based indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector<T> {
    entries: Vec<(usize, T)>,
}

impl<T: Scalar> SparseVector<T> {
    pub fn new(entries: Vec<(usize, T)>) -> Result<Self, DataError> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(DataError::UnsortedIndices);
        }
        if entries.iter().any(|(_, v)| !v.is_finite()) {
            return Err(DataError::NonFinite);
        }
        Ok(SparseVector { entries })
    }

    /// Keeps every nonzero component of a dense slice.
    pub fn from_dense(dense: &[T]) -> Self {
        SparseVector {
            entries: dense
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.is_zero())
                .map(|(i, v)| (i, *v))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, T)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Largest index plus one, or zero for the empty vector.
    pub fn min_dim(&self) -> usize {
        self.entries.last().map_or(0, |(i, _)| i + 1)
    }

    pub fn to_dense(&self, dim: usize) -> Vec<T> {
        let mut out = vec![T::zero(); dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn norm_sq(&self) -> T {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    /// Inner product with a dense vector; touches only the nonzeros.
    pub fn dot_dense(&self, dense: &[T]) -> T {
        let mut acc = T::zero();
        for &(i, v) in &self.entries {
            acc += dense[i] * v;
        }
        acc
    }

    pub fn cast<U: Scalar>(&self) -> SparseVector<U> {
        SparseVector {
            entries: self
                .entries
                .iter()
                .map(|&(i, v)| (i, U::from_f64_lossy(v.as_f64())))
                .collect(),
        }
    }
}

/// A feature vector with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample<T> {
    pub features: SparseVector<T>,
    pub label: Label,
}

impl<T: Scalar> LabeledExample<T> {
    pub fn new(features: SparseVector<T>, label: Label) -> Self {
        LabeledExample { features, label }
    }

    /// Builds an example from a dense slice, dropping zeros.
    pub fn from_dense(dense: &[T], label: Label) -> Self {
        LabeledExample {
            features: SparseVector::from_dense(dense),
            label,
        }
    }

    pub fn y(&self) -> T {
        self.label.value()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub examples: Vec<LabeledExample<T>>,
    pub dim: usize,
    pub name: String,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        name: impl Into<String>,
        examples: Vec<LabeledExample<T>>,
        dim: usize,
    ) -> Result<Self, DataError> {
        for ex in &examples {
            let need = ex.features.min_dim();
            if need > dim {
                return Err(DataError::IndexOutOfRange {
                    index: need - 1,
                    dim,
                });
            }
        }
        Ok(Dataset {
            examples,
            dim,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// `(negatives, positives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self
            .examples
            .iter()
            .filter(|e| e.label == Label::Positive)
            .count();
        (self.len() - pos, pos)
    }

    pub fn max_feature_norm(&self) -> T {
        self.examples
            .iter()
            .map(|e| e.features.norm())
            .fold(T::zero(), T::max)
    }

    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Self {
        Dataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            dim: self.dim,
            name: name.into(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            examples: self
                .examples
                .iter()
                .map(|e| LabeledExample::new(e.features.cast(), e.label))
                .collect(),
            dim: self.dim,
            name: self.name.clone(),
        }
    }

    /// Appends a constant `1` feature at index `dim`, acting as a bias term.
    pub fn with_bias_feature(&self) -> Self {
        let dim = self.dim + 1;
        let examples = self
            .examples
            .iter()
            .map(|e| {
                let mut entries = e.features.entries().to_vec();
                entries.push((self.dim, T::one()));
                LabeledExample::new(SparseVector { entries }, e.label)
            })
            .collect();
        Dataset {
            examples,
            dim,
            name: self.name.clone(),
        }
    }

    /// Column `j` of the dense interpretation (absent entries read as zero).
    fn dense_columns(&self) -> Vec<Vec<f64>> {
        let mut cols = vec![vec![0.0; self.len()]; self.dim];
        for (row, ex) in self.examples.iter().enumerate() {
            for &(j, v) in ex.features.entries() {
                cols[j][row] = v.as_f64();
            }
        }
        cols
    }
}

fn parse_label(tok: &str) -> Option<Label> {
    match tok {
        "0" | "-1" | "\u{2212}1" => return Some(Label::Negative),
        "1" | "+1" => return Some(Label::Positive),
        _ => {}
    }
    let v: f64 = tok.parse().ok()?;
    if v == 1.0 {
        Some(Label::Positive)
    } else if v == 0.0 || v == -1.0 {
        Some(Label::Negative)
    } else {
        None
    }
}

/// Parses SVMlight-style text. `dim_override` fixes the dimension; otherwise
/// it is one more than the largest 0-based index seen.
pub fn parse_svmlight<R: BufRead>(
    reader: R,
    name: &str,
    dim_override: Option<usize>,
) -> Result<Dataset<f64>, DataError> {
    let mut examples = Vec::new();
    let mut max_dim = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| DataError::Parse { line: lineno, msg };
        let mut toks = content.split_whitespace();
        let label_tok = toks.next().expect("non-empty line has a token");
        let label =
            parse_label(label_tok).ok_or_else(|| err(format!("invalid label `{label_tok}`")))?;
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for tok in toks {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected <index>:<value>, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("invalid feature index `{idx}`")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("invalid feature value `{val}`")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite feature value `{val}`")));
            }
            if let Some(&(prev, _)) = entries.last() {
                if idx - 1 <= prev {
                    return Err(err("feature indices must be strictly increasing".into()));
                }
            }
            if let Some(d) = dim_override {
                if idx > d {
                    return Err(err(format!("feature index {idx} exceeds dimension {d}")));
                }
            }
            entries.push((idx - 1, val));
        }
        if let Some(&(last, _)) = entries.last() {
            max_dim = max_dim.max(last + 1);
        }
        examples.push(LabeledExample::new(SparseVector { entries }, label));
    }
    if examples.is_empty() {
        return Err(DataError::Empty(name.to_string()));
    }
    let dim = dim_override.unwrap_or(max_dim).max(1);
    Dataset::new(name, examples, dim)
}

pub fn load_svmlight(
    path: impl AsRef<Path>,
    dim_override: Option<usize>,
) -> Result<Dataset<f64>, DataError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let reader = BufReader::new(File::open(path)?);
    parse_svmlight(reader, &name, dim_override)
}

/// Writes the dataset in the same format `parse_svmlight` reads. Values use
/// the shortest representation that parses back to the same number.
pub fn write_svmlight<T: Scalar, W: Write>(dataset: &Dataset<T>, mut out: W) -> io::Result<()> {
    for ex in &dataset.examples {
        let label = match ex.label {
            Label::Positive => "+1",
            Label::Negative => "-1",
        };
        write!(out, "{label}")?;
        for &(i, v) in ex.features.entries() {
            write!(out, " {}:{}", i + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_svmlight<T: Scalar>(dataset: &Dataset<T>, path: impl AsRef<Path>) -> io::Result<()> {
    let mut out = io::BufWriter::new(File::create(path)?);
    write_svmlight(dataset, &mut out)?;
    out.flush()
}

/// Parses comma-separated rows whose last column is a `0`/`1` class label
/// (the UCI SpamBase layout).
pub fn parse_labeled_csv<R: BufRead>(reader: R, name: &str) -> Result<Dataset<f64>, DataError> {
    let mut examples = Vec::new();
    let mut dim = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.trim();
        if content.is_empty() || content.starts_with('@') || content.starts_with('#') {
            continue;
        }
        let err = |msg: String| DataError::Parse { line: lineno, msg };
        let cells: Vec<&str> = content.split(',').map(str::trim).collect();
        let (label_cell, feats) = cells.split_last().expect("split yields one cell");
        let label =
            parse_label(label_cell).ok_or_else(|| err(format!("invalid label `{label_cell}`")))?;
        match dim {
            None => dim = Some(feats.len()),
            Some(d) if d != feats.len() => {
                return Err(err(format!("expected {d} features, got {}", feats.len())))
            }
            _ => {}
        }
        let mut dense = Vec::with_capacity(feats.len());
        for cell in feats {
            let v: f64 = cell
                .parse()
                .map_err(|_| err(format!("invalid value `{cell}`")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite value `{cell}`")));
            }
            dense.push(v);
        }
        examples.push(LabeledExample::from_dense(&dense, label));
    }
    if examples.is_empty() {
        return Err(DataError::Empty(name.to_string()));
    }
    Dataset::new(name, examples, dim.unwrap_or(1).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

/// Seeded uniform shuffle, then the first `train_size` indices go to the
/// training set and the next `test_size` to the test set.
pub fn split<T: Scalar>(
    dataset: &Dataset<T>,
    spec: &SplitSpec,
) -> Result<(Dataset<T>, Dataset<T>), DataError> {
    if spec.train_size == 0 || spec.test_size == 0 {
        return Err(DataError::EmptySplit);
    }
    let n = dataset.len();
    if spec.train_size + spec.test_size > n {
        return Err(DataError::SplitTooLarge {
            train: spec.train_size,
            test: spec.test_size,
            n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(spec.seed, Stream::DataShuffle));
    let (train_idx, rest) = order.split_at(spec.train_size);
    let test_idx = &rest[..spec.test_size];
    Ok((
        dataset.subset(format!("{}-train", dataset.name), train_idx),
        dataset.subset(format!("{}-test", dataset.name), test_idx),
    ))
}

/// Pearson correlation of each dense feature column with the label.
/// Zero-variance columns get correlation zero.
pub fn feature_label_correlations<T: Scalar>(dataset: &Dataset<T>) -> Result<Vec<f64>, DataError> {
    if dataset.is_empty() {
        return Err(DataError::Empty(dataset.name.clone()));
    }
    let n = dataset.len() as f64;
    let labels: Vec<f64> = dataset
        .examples
        .iter()
        .map(|e| f64::from(e.label.as_i8()))
        .collect();
    let y_mean = labels.iter().sum::<f64>() / n;
    let y_var: f64 = labels.iter().map(|y| (y - y_mean).powi(2)).sum();
    if y_var == 0.0 {
        return Err(DataError::SingleClass);
    }
    let cols = dataset.dense_columns();
    Ok(cols
        .iter()
        .map(|col| {
            let mean = col.iter().sum::<f64>() / n;
            let mut cov = 0.0;
            let mut var = 0.0;
            for (x, y) in col.iter().zip(&labels) {
                cov += (x - mean) * (y - y_mean);
                var += (x - mean) * (x - mean);
            }
            if var == 0.0 {
                0.0
            } else {
                cov / (var.sqrt() * y_var.sqrt())
            }
        })
        .collect())
}

/// Keeps the `k` features with the largest absolute correlation with the
/// label (ties to the lower index) and renumbers them `0..k` in original
/// order. Returns the reduced dataset and the kept original indices.
pub fn pearson_select<T: Scalar>(
    dataset: &Dataset<T>,
    k: usize,
) -> Result<(Dataset<T>, Vec<usize>), DataError> {
    if k == 0 || k > dataset.dim {
        return Err(DataError::TooManyFeatures { k, dim: dataset.dim });
    }
    let r = feature_label_correlations(dataset)?;
    let mut ranked: Vec<usize> = (0..dataset.dim).collect();
    ranked.sort_by(|&a, &b| r[b].abs().total_cmp(&r[a].abs()).then(a.cmp(&b)));
    let mut kept: Vec<usize> = ranked[..k].to_vec();
    kept.sort_unstable();
    let reduced = select_features(dataset, &kept)?;
    Ok((reduced, kept))
}

/// Keeps the features at the strictly increasing indices `kept`, renumbered
/// `0..kept.len()`.
pub fn select_features<T: Scalar>(dataset: &Dataset<T>, kept: &[usize]) -> Result<Dataset<T>, DataError> {
    if kept.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DataError::UnsortedIndices);
    }
    if let Some(&bad) = kept.iter().find(|&&i| i >= dataset.dim) {
        return Err(DataError::TooManyFeatures {
            k: bad + 1,
            dim: dataset.dim,
        });
    }
    let mut remap = vec![usize::MAX; dataset.dim];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    let examples = dataset
        .examples
        .iter()
        .map(|e| {
            let entries = e
                .features
                .entries()
                .iter()
                .filter(|(i, _)| remap[*i] != usize::MAX)
                .map(|&(i, v)| (remap[i], v))
                .collect();
            LabeledExample::new(SparseVector { entries }, e.label)
        })
        .collect();
    Ok(Dataset {
        examples,
        dim: kept.len().max(1),
        name: dataset.name.clone(),
    })
}

/// Kept feature indices as one CSV line.
pub fn kept_indices_csv(kept: &[usize]) -> String {
    kept.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Per-feature mean and population standard deviation of a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn fit<T: Scalar>(train: &Dataset<T>) -> Result<Self, DataError> {
        if train.is_empty() {
            return Err(DataError::Empty(train.name.clone()));
        }
        let n = train.len() as f64;
        let cols = train.dense_columns();
        let mut mean = Vec::with_capacity(train.dim);
        let mut std = Vec::with_capacity(train.dim);
        for col in &cols {
            let m = col.iter().sum::<f64>() / n;
            let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            mean.push(m);
            std.push(v.sqrt());
        }
        Ok(FeatureStats { mean, std })
    }

    /// `(v - mean) / std` per feature; zero-variance features pass through.
    pub fn transform<T: Scalar>(&self, dataset: &Dataset<T>) -> Result<Dataset<T>, DataError> {
        if dataset.dim != self.mean.len() {
            return Err(DataError::DimensionMismatch(dataset.dim, self.mean.len()));
        }
        let examples = dataset
            .examples
            .iter()
            .map(|e| {
                let mut dense: Vec<f64> = e
                    .features
                    .to_dense(dataset.dim)
                    .into_iter()
                    .map(Scalar::as_f64)
                    .collect();
                for (j, v) in dense.iter_mut().enumerate() {
                    if self.std[j] > 0.0 {
                        *v = (*v - self.mean[j]) / self.std[j];
                    }
                }
                let dense: Vec<T> = dense.into_iter().map(T::from_f64_lossy).collect();
                LabeledExample::from_dense(&dense, e.label)
            })
            .collect();
        Ok(Dataset {
            examples,
            dim: dataset.dim,
            name: dataset.name.clone(),
        })
    }
}

/// Standardizes both sets with statistics fitted on `train`.
pub fn standardize<T: Scalar>(
    train: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<(Dataset<T>, Dataset<T>, FeatureStats), DataError> {
    let stats = FeatureStats::fit(train)?;
    let train = stats.transform(train)?;
    let test = stats.transform(test)?;
    Ok((train, test, stats))
}
