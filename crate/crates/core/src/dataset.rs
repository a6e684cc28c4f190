//! Features, labels, synthetic data and the query/train/database split.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::io::{self, Reader, Writer};
use crate::linalg::Matrix;
use crate::rng::{self, Gaussian};

/// `N × D` single-precision feature matrix; all values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    values: Matrix<f32>,
}

impl FeatureSet {
    pub fn new(values: Matrix<f32>) -> Result<Self> {
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            let d = values.cols().max(1);
            return Err(Error::NonFinite(format!(
                "feature ({}, {}) is {}",
                pos / d,
                pos % d,
                values.as_slice()[pos]
            )));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.values.row(i)
    }

    pub fn matrix(&self) -> &Matrix<f32> {
        &self.values
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(indices),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(b"HCFS", 1);
        w.u32(self.len() as u32);
        w.u32(self.dim() as u32);
        for &v in self.values.as_slice() {
            w.f32(v);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open("HCFS", bytes, b"HCFS", 1)?;
        let n = r.u32()? as usize;
        let d = r.u32()? as usize;
        r.require(n * d * 4)?;
        let mut values = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            values.push(r.f32()?);
        }
        r.expect_end()?;
        Self::new(Matrix::from_vec(n, d, values)?)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (d, values) = io::parse_csv_rows::<f32>("features csv", text)?;
        let n = if d == 0 { 0 } else { values.len() / d };
        Self::new(Matrix::from_vec(n, d, values)?)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.values.row_iter() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    /// Writes HCFS, or comma-separated text for `.csv` / `.txt` paths.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if io::is_text_path(path) {
            io::write_file(path, self.to_csv().as_bytes())
        } else {
            io::write_file(path, &self.to_bytes())
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if io::is_text_path(path) {
            Self::from_csv(&io::read_text(path)?)
        } else {
            Self::from_bytes(&io::read_file(path)?)
        }
    }
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    FeatureSet::load(path)
}

pub fn save_features(features: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    features.save(path)
}

/// `N × C` binary label matrix; every row has at least one positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    values: Matrix<u8>,
}

impl LabelSet {
    pub fn new(values: Matrix<u8>) -> Result<Self> {
        if values.as_slice().iter().any(|&v| v > 1) {
            return Err(Error::invalid("label entries must be 0 or 1"));
        }
        if let Some(i) = (0..values.rows()).find(|&i| values.row(i).iter().all(|&v| v == 0)) {
            return Err(Error::invalid(format!("label row {i} has no positive entry")));
        }
        Ok(Self { values })
    }

    /// One-hot labels for single-label class indices.
    pub fn from_classes(classes: &[usize], num_classes: usize) -> Result<Self> {
        let mut m = Matrix::zeros(classes.len(), num_classes);
        for (i, &c) in classes.iter().enumerate() {
            if c >= num_classes {
                return Err(Error::invalid(format!(
                    "class index {c} out of range for {num_classes} classes"
                )));
            }
            m.set(i, c, 1);
        }
        Self::new(m)
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        self.values.row(i)
    }

    pub fn matrix(&self) -> &Matrix<u8> {
        &self.values
    }

    pub fn is_single_label(&self) -> bool {
        self.values
            .row_iter()
            .all(|r| r.iter().filter(|&&v| v != 0).count() == 1)
    }

    /// First positive class of row `i`.
    pub fn primary_class(&self, i: usize) -> usize {
        self.row(i).iter().position(|&v| v != 0).expect("rows have a positive label")
    }

    /// Class index per row; fails if any row is multi-label.
    pub fn class_indices(&self) -> Result<Vec<usize>> {
        if !self.is_single_label() {
            return Err(Error::invalid("labels are multi-label; class indices are undefined"));
        }
        Ok((0..self.len()).map(|i| self.primary_class(i)).collect())
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(indices),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(b"HCLS", 1);
        w.u32(self.len() as u32);
        w.u32(self.num_classes() as u32);
        w.bytes(self.values.as_slice());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open("HCLS", bytes, b"HCLS", 1)?;
        let n = r.u32()? as usize;
        let c = r.u32()? as usize;
        let payload = r.take(n * c)?.to_vec();
        r.expect_end()?;
        Self::new(Matrix::from_vec(n, c, payload)?)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (c, values) = io::parse_csv_rows::<u8>("labels csv", text)?;
        let n = if c == 0 { 0 } else { values.len() / c };
        Self::new(Matrix::from_vec(n, c, values)?)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.values.row_iter() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if io::is_text_path(path) {
            io::write_file(path, self.to_csv().as_bytes())
        } else {
            io::write_file(path, &self.to_bytes())
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if io::is_text_path(path) {
            Self::from_csv(&io::read_text(path)?)
        } else {
            Self::from_bytes(&io::read_file(path)?)
        }
    }
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelSet> {
    LabelSet::load(path)
}

/// Output of [`make_synthetic_blobs_detailed`].
#[derive(Debug, Clone)]
pub struct SyntheticBlobs {
    pub features: FeatureSet,
    pub labels: LabelSet,
    /// `C × D` class centres.
    pub centers: Matrix<f64>,
    /// Fraction of rows whose nearest centre is their own class centre.
    pub nearest_center_accuracy: f64,
}

/// Minimum pairwise centre distance, in units of `spread`.
pub const BLOB_SEPARATION: f64 = 8.0;

/// Isotropic Gaussian blobs, `n_per_class` rows per class, rows ordered by
/// class.
///
/// Centre directions are orthonormalised Gaussian vectors when `C ≤ D`
/// (scaled simplex) and random unit vectors otherwise; they are then scaled
/// so the closest pair of centres is `BLOB_SEPARATION · spread` apart.
/// Samples are `centre + spread · N(0, I)`.
pub fn make_synthetic_blobs_detailed(
    num_classes: usize,
    n_per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<SyntheticBlobs> {
    if num_classes < 2 || dim < 2 {
        return Err(Error::invalid(format!(
            "synthetic blobs need at least 2 classes and 2 dimensions, got C={num_classes}, D={dim}"
        )));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::invalid(format!("spread must be positive, got {spread}")));
    }

    let mut g = Gaussian::new(rng::sub_rng(seed, rng::stream::BLOB_CENTERS));
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    for _ in 0..num_classes {
        let mut v: Vec<f64> = (0..dim).map(|_| g.sample()).collect();
        if num_classes <= dim {
            // Gram–Schmidt against the directions so far.
            for d in &dirs {
                let p: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(d) {
                    *x -= p * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        dirs.push(v);
    }
    let mut min_dist = f64::INFINITY;
    for i in 0..num_classes {
        for j in 0..i {
            let d = squared_distance(&dirs[i], &dirs[j]).sqrt();
            min_dist = min_dist.min(d);
        }
    }
    let scale = BLOB_SEPARATION * spread / min_dist;
    let centers = Matrix::from_fn(num_classes, dim, |c, j| dirs[c][j] * scale);

    let mut noise = Gaussian::new(rng::sub_rng(seed, rng::stream::BLOB_NOISE));
    let n = num_classes * n_per_class;
    let mut values = Vec::with_capacity(n * dim);
    let mut classes = Vec::with_capacity(n);
    for c in 0..num_classes {
        for _ in 0..n_per_class {
            for j in 0..dim {
                values.push((centers.get(c, j) + spread * noise.sample()) as f32);
            }
            classes.push(c);
        }
    }
    let features = FeatureSet::new(Matrix::from_vec(n, dim, values)?)?;
    let labels = LabelSet::from_classes(&classes, num_classes)?;
    let nearest_center_accuracy = nearest_center_accuracy(&features, &classes, &centers);
    Ok(SyntheticBlobs {
        features,
        labels,
        centers,
        nearest_center_accuracy,
    })
}

pub fn make_synthetic_blobs(
    num_classes: usize,
    n_per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<(FeatureSet, LabelSet)> {
    let b = make_synthetic_blobs_detailed(num_classes, n_per_class, dim, spread, seed)?;
    Ok((b.features, b.labels))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fraction of rows whose nearest centre (Euclidean) is `classes[i]`.
pub fn nearest_center_accuracy(features: &FeatureSet, classes: &[usize], centers: &Matrix<f64>) -> f64 {
    if features.is_empty() {
        return 0.0;
    }
    let correct = (0..features.len())
        .filter(|&i| {
            let x: Vec<f64> = features.row(i).iter().map(|&v| v as f64).collect();
            let best = (0..centers.rows())
                .map(|c| (c, squared_distance(&x, centers.row(c))))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(c, _)| c);
            best == Some(classes[i])
        })
        .count();
    correct as f64 / features.len() as f64
}

/// Disjoint query and train indices plus the retrieval database.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub query: Vec<usize>,
    pub train: Vec<usize>,
    pub database: Vec<usize>,
}

impl Split {
    /// Checks disjointness of query/train and that indices are below `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut role = vec![0u8; n];
        for (list, bit, name) in [(&self.query, 1u8, "query"), (&self.train, 2, "train")] {
            for &i in list {
                if i >= n {
                    return Err(Error::invalid(format!("{name} index {i} out of range for {n} items")));
                }
                if role[i] & bit != 0 {
                    return Err(Error::invalid(format!("{name} index {i} listed twice")));
                }
                role[i] |= bit;
            }
        }
        if let Some(i) = role.iter().position(|&r| r == 3) {
            return Err(Error::invalid(format!("item {i} is in both query and train")));
        }
        if let Some(&i) = self.database.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("database index {i} out of range for {n} items")));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, list) in [("query", &self.query), ("train", &self.train), ("database", &self.database)] {
            s.push_str(name);
            s.push(':');
            for i in list.iter() {
                let _ = write!(s, " {i}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut parts: [Option<Vec<usize>>; 3] = [None, None, None];
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (name, rest) = line
                .split_once(':')
                .ok_or_else(|| Error::Malformed {
                    format: "split",
                    reason: format!("line without ':' separator: {line:?}"),
                })?;
            let slot = match name.trim() {
                "query" => 0,
                "train" => 1,
                "database" => 2,
                other => {
                    return Err(Error::Malformed {
                        format: "split",
                        reason: format!("unknown section {other:?}"),
                    })
                }
            };
            let indices = rest
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>().map_err(|_| Error::Malformed {
                        format: "split",
                        reason: format!("bad index {t:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if parts[slot].replace(indices).is_some() {
                return Err(Error::Malformed {
                    format: "split",
                    reason: format!("section {name:?} repeated"),
                });
            }
        }
        let [q, t, d] = parts;
        let missing = |n: &str| Error::Malformed {
            format: "split",
            reason: format!("missing section {n:?}"),
        };
        Ok(Self {
            query: q.ok_or_else(|| missing("query"))?,
            train: t.ok_or_else(|| missing("train"))?,
            database: d.ok_or_else(|| missing("database"))?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_file(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&io::read_text(path.as_ref())?)
    }
}

/// Per-class query and train quotas over a seeded random scan.
///
/// Items are visited in a seeded random order. An item joins the query set
/// if any class it carries still needs query items, otherwise the training
/// set if any of its classes still needs training items; it then counts
/// toward every class it carries. The database is every non-query item, in
/// ascending index order. Query and train lists are sorted ascending.
pub fn split_protocol(
    labels: &LabelSet,
    n_query_per_class: usize,
    n_train_per_class: usize,
    seed: u64,
) -> Result<Split> {
    let c = labels.num_classes();
    let n = labels.len();
    let mut population = vec![0usize; c];
    for i in 0..n {
        for (k, &v) in labels.row(i).iter().enumerate() {
            population[k] += v as usize;
        }
    }
    if let Some(k) = population
        .iter()
        .position(|&p| p < n_query_per_class + n_train_per_class)
    {
        return Err(Error::invalid(format!(
            "class {k} has {} items, fewer than the {} query + {} train requested",
            population[k], n_query_per_class, n_train_per_class
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::sub_rng(seed, rng::stream::SPLIT));

    let mut need_query = vec![n_query_per_class; c];
    let mut need_train = vec![n_train_per_class; c];
    let mut in_query = vec![false; n];
    let mut query = Vec::new();
    let mut train = Vec::new();
    for &i in &order {
        let row = labels.row(i);
        let carried = || row.iter().enumerate().filter(|(_, &v)| v != 0).map(|(k, _)| k);
        if carried().any(|k| need_query[k] > 0) {
            carried().for_each(|k| need_query[k] = need_query[k].saturating_sub(1));
            in_query[i] = true;
            query.push(i);
        } else if carried().any(|k| need_train[k] > 0) {
            carried().for_each(|k| need_train[k] = need_train[k].saturating_sub(1));
            train.push(i);
        }
    }
    // Greedy multi-label scans can exhaust a class early through co-labelled items.
    if let Some(k) = (0..c).find(|&k| need_query[k] > 0 || need_train[k] > 0) {
        return Err(Error::invalid(format!(
            "class {k} could not fill its quota ({} query, {} train still missing)",
            need_query[k], need_train[k]
        )));
    }
    query.sort_unstable();
    train.sort_unstable();
    let database = (0..n).filter(|&i| !in_query[i]).collect();
    Ok(Split { query, train, database })
}

/// Per-dimension mean and standard deviation, computed on the given rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits on `rows` (typically the training split). Zero-variance
    /// dimensions get unit scale.
    pub fn fit(features: &FeatureSet, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("cannot fit standardisation on zero rows"));
        }
        let d = features.dim();
        let mut mean = vec![0.0; d];
        for &i in rows {
            for (m, &v) in mean.iter_mut().zip(features.row(i)) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
        let mut var = vec![0.0; d];
        for &i in rows {
            for ((s, &v), m) in var.iter_mut().zip(features.row(i)).zip(&mean) {
                *s += (v as f64 - m).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / rows.len() as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, features: &FeatureSet) -> Result<FeatureSet> {
        if features.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                context: "standardiser dimension",
                expected: self.mean.len(),
                actual: features.dim(),
            });
        }
        let m = Matrix::from_fn(features.len(), features.dim(), |i, j| {
            ((features.row(i)[j] as f64 - self.mean[j]) / self.std[j]) as f32
        });
        FeatureSet::new(m)
    }
}
