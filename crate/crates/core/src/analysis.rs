//! Diagnostics over trained codes and the λ / ablation sweeps.

use std::fmt::Write as _;

use serde::Serialize;

use crate::dataset::{FeatureSet, LabelSet, Split};
use crate::error::{Error, Result};
use crate::hadamard::Codebook;
use crate::linalg::Matrix;
use crate::lsh::RandomHyperplanes;
use crate::model::{HashNetwork, NetSpec};
use crate::retrieval::{self, binarize, column_means, BinarizationMode, BinaryCodeSet, EvalOptions, EvalReport, RankedList};
use crate::scalar::Scalar;
use crate::trainer::{self, hash_activations, TrainConfig, TrainHistory, Variant};

/// Fraction of `+1` per bit position.
pub fn bit_balance(codes: &BinaryCodeSet) -> Result<Vec<f64>> {
    if codes.is_empty() {
        return Err(Error::invalid("bit balance needs at least one code"));
    }
    let k = codes.code_length();
    let mut ones = vec![0usize; k];
    for i in 0..codes.len() {
        let words = codes.code(i).words;
        for (j, c) in ones.iter_mut().enumerate() {
            *c += ((words[j / 64] >> (j % 64)) & 1) as usize;
        }
    }
    Ok(ones.into_iter().map(|c| c as f64 / codes.len() as f64).collect())
}

/// Counts of activations over `[−1, 1]` split into `bins` equal intervals.
/// Values outside the range are clamped into the end bins; the top bin is
/// closed on the right.
pub fn activation_histogram<T: Scalar>(u: &Matrix<T>, bins: usize) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let mut counts = vec![0usize; bins];
    for &v in u.as_slice() {
        let pos = (v.to_f64_lossy() + 1.0) / 2.0 * bins as f64;
        let b = if pos.is_nan() { 0 } else { (pos.floor().max(0.0) as usize).min(bins - 1) };
        counts[b] += 1;
    }
    Ok(counts)
}

/// Share of the histogram mass in the outermost `fraction` of bins on each side.
pub fn outer_mass(counts: &[usize], fraction: f64) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let edge = ((counts.len() as f64 * fraction).round() as usize).max(1).min(counts.len() / 2);
    let outer: usize = counts[..edge].iter().sum::<usize>() + counts[counts.len() - edge..].iter().sum::<usize>();
    outer as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RankWeighting {
    /// `w(r) = 1 / log₂(r + 1)` for 1-based rank `r`.
    LogDiscount,
    Uniform,
}

impl RankWeighting {
    #[inline]
    fn weight(self, rank: usize) -> f64 {
        match self {
            RankWeighting::LogDiscount => 1.0 / ((rank + 1) as f64).log2(),
            RankWeighting::Uniform => 1.0,
        }
    }
}

/// Class-to-class retrieval frequencies.
///
/// Entry `(a, b)` accumulates `w(r)` for every retrieved item of class `b`
/// within the top `top_r` of every query of class `a` (multi-label rows
/// contribute to each class they carry); rows are then normalised to sum to
/// 1. Classes without queries keep an all-zero row.
pub fn confusion_matrix(
    rankings: &[RankedList],
    query_labels: &Matrix<u8>,
    db_labels: &Matrix<u8>,
    top_r: usize,
    weighting: RankWeighting,
) -> Result<Matrix<f64>> {
    if rankings.len() != query_labels.rows() {
        return Err(Error::DimensionMismatch {
            context: "rankings vs query labels",
            expected: query_labels.rows(),
            actual: rankings.len(),
        });
    }
    let c = query_labels.cols();
    if db_labels.cols() != c {
        return Err(Error::DimensionMismatch {
            context: "query vs database label width",
            expected: c,
            actual: db_labels.cols(),
        });
    }
    let mut m = Matrix::zeros(c, c);
    for (q, ranking) in rankings.iter().enumerate() {
        let qclasses: Vec<usize> = (0..c).filter(|&a| query_labels.get(q, a) != 0).collect();
        for (pos, &item) in ranking.indices.iter().take(top_r).enumerate() {
            let w = weighting.weight(pos + 1);
            for (b, &v) in db_labels.row(item).iter().enumerate() {
                if v != 0 {
                    for &a in &qclasses {
                        m.set(a, b, m.get(a, b) + w);
                    }
                }
            }
        }
    }
    for a in 0..c {
        let row = m.row_mut(a);
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    Ok(m)
}

pub fn min_diagonal(m: &Matrix<f64>) -> f64 {
    (0..m.rows().min(m.cols())).map(|i| m.get(i, i)).fold(f64::INFINITY, f64::min)
}

/// `C × C` matrix of codeword inner products divided by `K`.
pub fn codebook_gram(cb: &Codebook) -> Matrix<f64> {
    let c = cb.num_classes();
    let k = cb.code_length() as f64;
    Matrix::from_fn(c, c, |i, j| {
        let ip: i64 = cb
            .codeword(i)
            .iter()
            .zip(cb.codeword(j))
            .map(|(&a, &b)| (a as i64) * (b as i64))
            .sum();
        ip as f64 / k
    })
}

/// Largest `|G_ij|` over `i ≠ j`; 0 for a single class.
pub fn max_off_diagonal(gram: &Matrix<f64>) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..gram.rows() {
        for j in 0..gram.cols() {
            if i != j {
                m = m.max(gram.get(i, j).abs());
            }
        }
    }
    m
}

pub fn matrix_csv(m: &Matrix<f64>) -> String {
    let mut s = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn histogram_csv(counts: &[usize]) -> String {
    let bins = counts.len() as f64;
    let mut s = String::from("bin_start,bin_end,count\n");
    for (b, c) in counts.iter().enumerate() {
        let lo = -1.0 + 2.0 * b as f64 / bins;
        let hi = -1.0 + 2.0 * (b + 1) as f64 / bins;
        let _ = writeln!(s, "{lo},{hi},{c}");
    }
    s
}

pub fn balance_csv(fractions: &[f64]) -> String {
    let mut s = String::from("bit,fraction_plus_one\n");
    for (j, f) in fractions.iter().enumerate() {
        let _ = writeln!(s, "{j},{f}");
    }
    s
}

/// Dataset and codebook shared by every run of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentData<'a> {
    pub features: &'a FeatureSet,
    pub labels: &'a LabelSet,
    pub split: &'a Split,
    pub codebook: &'a Codebook,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub spec: NetSpec,
    pub eval: EvalOptions,
    pub mode: BinarizationMode,
}

#[derive(Debug, Clone)]
pub struct EncodedSplit {
    pub queries: BinaryCodeSet,
    pub database: BinaryCodeSet,
    /// Pre-sign hash activations of the database items.
    pub database_activations: Matrix<f64>,
}

/// Encodes the query and database items of `split`. In mean-centred mode
/// both use the per-bit means of the database activations.
pub fn encode_split<T: Scalar>(
    net: &HashNetwork<T>,
    features: &FeatureSet,
    split: &Split,
    mode: BinarizationMode,
) -> Result<EncodedSplit> {
    let uq = hash_activations(net, features, &split.query)?.map(|v| v.to_f64_lossy());
    let udb = hash_activations(net, features, &split.database)?.map(|v| v.to_f64_lossy());
    let means = column_means(&udb);
    let queries = binarize(&uq, mode, Some(&means))?;
    let database = binarize(&udb, mode, Some(&means))?;
    Ok(EncodedSplit {
        queries,
        database,
        database_activations: udb,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub network: HashNetwork<f64>,
    pub history: TrainHistory,
    pub encoded: EncodedSplit,
    pub rankings: Vec<RankedList>,
    pub report: EvalReport,
}

/// Train, encode the split, rank and evaluate.
pub fn run_experiment(config: &ExperimentConfig, data: ExperimentData<'_>) -> Result<ExperimentResult> {
    let (network, history) =
        trainer::train::<f64>(&config.train, data.features, data.labels, data.split, data.codebook, &config.spec)?;
    let encoded = encode_split(&network, data.features, data.split, config.mode)?;
    let rankings = retrieval::search(&encoded.queries, &encoded.database, config.eval.cutoff, config.eval.threads)?;
    let qlabels = data.labels.matrix().select_rows(&data.split.query);
    let dblabels = data.labels.matrix().select_rows(&data.split.database);
    let report = retrieval::evaluate_rankings(
        &rankings,
        &qlabels,
        &dblabels,
        encoded.database.code_length(),
        config.mode,
        &config.eval,
    )?;
    Ok(ExperimentResult {
        network,
        history,
        encoded,
        rankings,
        report,
    })
}

pub const DEFAULT_LAMBDA_GRID: &[f64] = &[0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub map: f64,
}

/// One full train + evaluate per λ with the base configuration's seeds.
pub fn lambda_sweep(base: &ExperimentConfig, data: ExperimentData<'_>, lambdas: &[f64]) -> Result<Vec<SweepRow>> {
    if lambdas.is_empty() {
        return Err(Error::invalid("lambda list is empty"));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let mut cfg = base.clone();
            cfg.train.lambda = lambda;
            cfg.train.variant = Variant::Full;
            let r = run_experiment(&cfg, data)?;
            Ok(SweepRow { lambda, map: r.report.map })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("lambda,map\n");
    for r in rows {
        let _ = writeln!(s, "{},{}", r.lambda, r.map);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub map: f64,
}

/// HCDH, HCDH-H and HCDH-C under identical seeds and architecture.
pub fn ablate(base: &ExperimentConfig, data: ExperimentData<'_>) -> Result<Vec<AblationRow>> {
    Variant::ALL
        .iter()
        .map(|&variant| {
            let mut cfg = base.clone();
            cfg.train.variant = variant;
            let r = run_experiment(&cfg, data)?;
            Ok(AblationRow { variant, map: r.report.map })
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("variant,map\n");
    for r in rows {
        let _ = writeln!(s, "{},{}", r.variant.name(), r.map);
    }
    s
}

/// Random-hyperplane codes over raw features for the split, evaluated with
/// the same path as learned codes.
pub fn lsh_baseline(
    features: &FeatureSet,
    labels: &LabelSet,
    split: &Split,
    code_length: usize,
    seed: u64,
    options: &EvalOptions,
) -> Result<EvalReport> {
    split.validate(features.len())?;
    let planes = RandomHyperplanes::new(features.dim(), code_length, seed)?;
    let queries = planes.hash(&features.select(&split.query))?;
    let database = planes.hash(&features.select(&split.database))?;
    retrieval::evaluate(
        &queries,
        &database,
        &labels.matrix().select_rows(&split.query),
        &labels.matrix().select_rows(&split.database),
        options,
    )
}

/// Headline numbers written by the `analyze` pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisSummary {
    pub code_length: usize,
    pub lambda: f64,
    pub seed: u64,
    pub bits_in_balance_band: f64,
    pub balance_band: (f64, f64),
    pub histogram_outer_mass: f64,
    pub confusion_min_diagonal: f64,
    pub confusion_min_diagonal_unweighted: f64,
    pub codebook_max_off_diagonal: f64,
}

/// Fraction of bits whose `+1` share lies in `[lo, hi]`.
pub fn fraction_in_band(fractions: &[f64], lo: f64, hi: f64) -> f64 {
    if fractions.is_empty() {
        return 0.0;
    }
    fractions.iter().filter(|&&f| f >= lo && f <= hi).count() as f64 / fractions.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hadamard::build_codebook;

    #[test]
    fn balance_all_plus() {
        let m = Matrix::from_vec(3, 4, vec![1i8; 12]).unwrap();
        let codes = BinaryCodeSet::from_signs(&m, BinarizationMode::Sign).unwrap();
        assert_eq!(bit_balance(&codes).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn balance_of_direct_codebook_matches_column_means() {
        for (k, c, seed) in [(16, 10, 1), (32, 8, 2), (16, 15, 3)] {
            let cb = build_codebook(k, c, seed).unwrap();
            let codes = BinaryCodeSet::from_signs(cb.codewords(), BinarizationMode::Sign).unwrap();
            let bal = bit_balance(&codes).unwrap();
            for j in 0..k {
                let mean = (0..c).map(|i| cb.codeword(i)[j] as f64).sum::<f64>() / c as f64;
                assert_eq!(bal[j], (1.0 + mean) / 2.0);
            }
        }
        // All 2^m − 1 non-trivial rows: every column holds one more −1 than +1
        // (the all-ones row is missing), so the share is exactly (K/2 − 1)/(K − 1).
        let cb = build_codebook(8, 7, 0).unwrap();
        let codes = BinaryCodeSet::from_signs(cb.codewords(), BinarizationMode::Sign).unwrap();
        for j in 1..8 {
            assert_eq!(bit_balance(&codes).unwrap()[j], 3.0 / 7.0);
        }
    }

    #[test]
    fn histogram_cases() {
        let u = Matrix::from_vec(2, 2, vec![0.999f64; 4]).unwrap();
        let h = activation_histogram(&u, 10).unwrap();
        assert_eq!(h[9], 4);
        assert_eq!(h.iter().sum::<usize>(), 4);

        let u = Matrix::from_vec(1, 5, vec![-0.5f64, 0.0, 0.2, -1.0, 1.0]).unwrap();
        let h = activation_histogram(&u, 2).unwrap();
        let plus = u.as_slice().iter().filter(|&&v| v >= 0.0).count();
        assert_eq!(h, vec![5 - plus, plus]);
        assert!(activation_histogram(&u, 0).is_err());
        assert_eq!(outer_mass(&[5, 0, 0, 0, 0, 0, 0, 0, 0, 5], 0.1), 1.0);
    }

    #[test]
    fn confusion_perfect_is_identity() {
        let db = Matrix::from_vec(4, 2, vec![1, 0, 1, 0, 0, 1, 0, 1]).unwrap();
        let q = Matrix::from_vec(2, 2, vec![1, 0, 0, 1]).unwrap();
        let rankings = vec![
            RankedList { indices: vec![0, 1], distances: vec![0, 0] },
            RankedList { indices: vec![2, 3], distances: vec![0, 0] },
        ];
        let m = confusion_matrix(&rankings, &q, &db, 2, RankWeighting::LogDiscount).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn confusion_weights_top_ranks() {
        let db = Matrix::from_vec(2, 2, vec![1, 0, 0, 1]).unwrap();
        let q = Matrix::from_vec(1, 2, vec![1, 0]).unwrap();
        let rankings = vec![RankedList { indices: vec![1, 0], distances: vec![0, 1] }];
        let w = confusion_matrix(&rankings, &q, &db, 2, RankWeighting::LogDiscount).unwrap();
        let u = confusion_matrix(&rankings, &q, &db, 2, RankWeighting::Uniform).unwrap();
        assert_eq!(u.row(0), &[0.5, 0.5]);
        let w1 = 1.0;
        let w2 = 1.0 / 3f64.log2();
        assert!((w.get(0, 1) - w1 / (w1 + w2)).abs() < 1e-15);
        assert!((w.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gram_cases() {
        let cb = build_codebook(16, 10, 1).unwrap();
        let g = codebook_gram(&cb);
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(g.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        let single = build_codebook(4, 1, 0).unwrap();
        assert_eq!(codebook_gram(&single).as_slice(), &[1.0]);
        assert_eq!(max_off_diagonal(&codebook_gram(&single)), 0.0);
    }

    #[test]
    fn band_fraction() {
        assert_eq!(fraction_in_band(&[0.1, 0.5, 0.8, 0.9], 0.2, 0.8), 0.5);
    }
}
