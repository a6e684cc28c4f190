//! Bit-packed hash codes, exact Hamming ranking and retrieval metrics.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{self, Reader, Writer};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BinarizationMode {
    /// `sign(u)`
    Sign,
    /// `sign(u − mean)` with per-bit means of the database activations.
    MeanCenteredSign,
}

impl BinarizationMode {
    fn tag(self) -> u8 {
        match self {
            BinarizationMode::Sign => 0,
            BinarizationMode::MeanCenteredSign => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(BinarizationMode::Sign),
            1 => Some(BinarizationMode::MeanCenteredSign),
            _ => None,
        }
    }
}

impl std::fmt::Display for BinarizationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BinarizationMode::Sign => "sign",
            BinarizationMode::MeanCenteredSign => "mean_centered_sign",
        })
    }
}

#[inline]
pub fn words_per_code(code_length: usize) -> usize {
    code_length.div_ceil(64)
}

/// `N` codes of `K` bits, each packed into `⌈K/64⌉` words.
///
/// Bit `j` of a code lives in word `j / 64` at bit position `j % 64`; a set
/// bit means `+1`. Padding bits above `K` are always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCodeSet {
    len: usize,
    code_length: usize,
    words: Vec<u64>,
    pub mode: BinarizationMode,
}

/// One packed code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeRef<'a> {
    pub code_length: usize,
    pub words: &'a [u64],
}

impl BinaryCodeSet {
    /// Packs an `N × K` matrix of ±1 entries.
    pub fn from_signs(signs: &Matrix<i8>, mode: BinarizationMode) -> Result<Self> {
        let k = signs.cols();
        if k == 0 {
            return Err(Error::invalid("codes must have at least one bit"));
        }
        let wpc = words_per_code(k);
        let mut words = vec![0u64; signs.rows() * wpc];
        for (i, row) in signs.row_iter().enumerate() {
            let code = &mut words[i * wpc..(i + 1) * wpc];
            for (j, &s) in row.iter().enumerate() {
                match s {
                    1 => code[j / 64] |= 1u64 << (j % 64),
                    -1 => {}
                    other => return Err(Error::invalid(format!("code entry ({i}, {j}) is {other}, expected ±1"))),
                }
            }
        }
        Ok(Self {
            len: signs.rows(),
            code_length: k,
            words,
            mode,
        })
    }

    /// Builds from raw words, checking length and zero padding.
    pub fn from_words(len: usize, code_length: usize, words: Vec<u64>, mode: BinarizationMode) -> Result<Self> {
        if code_length == 0 {
            return Err(Error::invalid("codes must have at least one bit"));
        }
        let wpc = words_per_code(code_length);
        if words.len() != len * wpc {
            return Err(Error::DimensionMismatch {
                context: "packed code words",
                expected: len * wpc,
                actual: words.len(),
            });
        }
        let rem = code_length % 64;
        if rem != 0 {
            let pad_mask = !((1u64 << rem) - 1);
            if let Some(i) = (0..len).find(|i| words[i * wpc + wpc - 1] & pad_mask != 0) {
                return Err(Error::invalid(format!("code {i} has non-zero padding bits")));
            }
        }
        Ok(Self {
            len,
            code_length,
            words,
            mode,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn code_length(&self) -> usize {
        self.code_length
    }

    pub fn words_per_code(&self) -> usize {
        words_per_code(self.code_length)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn code(&self, i: usize) -> CodeRef<'_> {
        let wpc = self.words_per_code();
        CodeRef {
            code_length: self.code_length,
            words: &self.words[i * wpc..(i + 1) * wpc],
        }
    }

    /// ±1 value of bit `j` of code `i`.
    #[inline]
    pub fn bit(&self, i: usize, j: usize) -> i8 {
        let w = self.words[i * self.words_per_code() + j / 64];
        if (w >> (j % 64)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn unpack(&self) -> Matrix<i8> {
        Matrix::from_fn(self.len, self.code_length, |i, j| self.bit(i, j))
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let wpc = self.words_per_code();
        let mut words = Vec::with_capacity(indices.len() * wpc);
        for &i in indices {
            words.extend_from_slice(self.code(i).words);
        }
        Self {
            len: indices.len(),
            code_length: self.code_length,
            words,
            mode: self.mode,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(b"HCBC", 1);
        w.u32(self.len as u32);
        w.u32(self.code_length as u32);
        w.u8(self.mode.tag());
        for &x in &self.words {
            w.u64(x);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open("HCBC", bytes, b"HCBC", 1)?;
        let n = r.u32()? as usize;
        let k = r.u32()? as usize;
        let tag = r.u8()?;
        let mode = BinarizationMode::from_tag(tag).ok_or_else(|| r.malformed(format!("unknown mode tag {tag}")))?;
        let count = n * words_per_code(k);
        r.require(count * 8)?;
        let words = (0..count).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        r.expect_end()?;
        Self::from_words(n, k, words, mode).map_err(|e| r.malformed(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&io::read_file(path.as_ref())?)
    }
}

/// Per-column means of pre-sign activations.
pub fn column_means<T: Scalar>(u: &Matrix<T>) -> Vec<T> {
    let mut means = vec![T::zero(); u.cols()];
    for row in u.row_iter() {
        for (m, &v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = T::from_usize(u.rows().max(1)).unwrap();
    means.iter_mut().for_each(|m| *m /= n);
    means
}

/// Thresholds activations into packed codes: bit `= sign(u − shift)` with
/// `sign(0) = +1`, where `shift` is 0 in sign mode and the supplied per-bit
/// reference means in mean-centred mode.
pub fn binarize<T: Scalar>(
    u: &Matrix<T>,
    mode: BinarizationMode,
    reference_means: Option<&[T]>,
) -> Result<BinaryCodeSet> {
    let signs = match mode {
        BinarizationMode::Sign => u.map(|v| v.sign_pm1()),
        BinarizationMode::MeanCenteredSign => {
            let means = reference_means
                .ok_or_else(|| Error::invalid("mean-centred binarisation requires reference means"))?;
            if means.len() != u.cols() {
                return Err(Error::DimensionMismatch {
                    context: "reference means length",
                    expected: u.cols(),
                    actual: means.len(),
                });
            }
            Matrix::from_fn(u.rows(), u.cols(), |i, j| (u.get(i, j) - means[j]).sign_pm1())
        }
    };
    BinaryCodeSet::from_signs(&signs, mode)
}

#[inline]
fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Number of differing bits, via XOR and popcount over the packed words.
pub fn hamming_distance(a: CodeRef<'_>, b: CodeRef<'_>) -> Result<u32> {
    if a.code_length != b.code_length {
        return Err(Error::DimensionMismatch {
            context: "hamming code length",
            expected: a.code_length,
            actual: b.code_length,
        });
    }
    Ok(hamming_words(a.words, b.words))
}

/// Database indices ordered by `(distance, index)` ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RankedList {
    pub indices: Vec<usize>,
    pub distances: Vec<u32>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Exact top-`R` for one query by counting sort over the `K + 1` possible
/// distances. `dist` is scratch space of at least `database.len()`.
fn rank_one(query: &[u64], database: &BinaryCodeSet, cutoff: usize, dist: &mut Vec<u32>) -> RankedList {
    let n = database.len();
    let k = database.code_length();
    let wpc = database.words_per_code();
    dist.clear();
    let mut counts = vec![0usize; k + 1];
    match wpc {
        1 => {
            let q = query[0];
            for &w in database.words() {
                let d = (q ^ w).count_ones();
                counts[d as usize] += 1;
                dist.push(d);
            }
        }
        _ => {
            for code in database.words().chunks_exact(wpc) {
                let d = hamming_words(query, code);
                counts[d as usize] += 1;
                dist.push(d);
            }
        }
    }
    let r = cutoff.min(n);
    if r == 0 {
        return RankedList::default();
    }
    // Smallest threshold distance whose cumulative count reaches r.
    let mut start = vec![0usize; k + 1];
    let mut acc = 0;
    let mut threshold = k;
    for d in 0..=k {
        start[d] = acc;
        acc += counts[d];
        if acc >= r {
            threshold = d;
            break;
        }
    }
    let mut fill = start.clone();
    let mut indices = vec![0usize; r];
    let mut distances = vec![0u32; r];
    let mut placed = 0;
    for (i, &d) in dist.iter().enumerate() {
        let d = d as usize;
        if d > threshold {
            continue;
        }
        let slot = fill[d];
        if d == threshold && slot >= r {
            continue;
        }
        indices[slot] = i;
        distances[slot] = d as u32;
        fill[d] += 1;
        placed += 1;
        if placed == r {
            break;
        }
    }
    RankedList { indices, distances }
}

/// Exact Hamming ranking of the database for every query, truncated to the
/// top `cutoff` (all items when `None`). Ties are broken by ascending
/// database index. With `threads > 1` queries are ranked on a rayon pool;
/// results are identical to the sequential path and in query order.
pub fn search(
    queries: &BinaryCodeSet,
    database: &BinaryCodeSet,
    cutoff: Option<usize>,
    threads: usize,
) -> Result<Vec<RankedList>> {
    if queries.code_length() != database.code_length() {
        return Err(Error::DimensionMismatch {
            context: "query vs database code length",
            expected: database.code_length(),
            actual: queries.code_length(),
        });
    }
    let r = cutoff.unwrap_or(database.len());
    let wpc = queries.words_per_code();
    if threads <= 1 {
        let mut scratch = Vec::with_capacity(database.len());
        return Ok(queries
            .words()
            .chunks_exact(wpc)
            .map(|q| rank_one(q, database, r, &mut scratch))
            .collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(|| {
        queries
            .words()
            .par_chunks_exact(wpc)
            .map_init(
                || Vec::with_capacity(database.len()),
                |scratch, q| rank_one(q, database, r, scratch),
            )
            .collect()
    }))
}

/// Items are relevant when they share at least one label.
#[inline]
pub fn relevance(query_labels: &[u8], item_labels: &[u8]) -> bool {
    query_labels.iter().zip(item_labels).any(|(&a, &b)| a != 0 && b != 0)
}

/// Normaliser for average precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApDenominator {
    /// `min(R, #relevant in database)`
    #[default]
    MinCutoffRelevant,
    /// `#relevant in database`
    AllRelevant,
}

impl std::str::FromStr for ApDenominator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" | "min-cutoff-relevant" => Ok(ApDenominator::MinCutoffRelevant),
            "relevant" | "all-relevant" => Ok(ApDenominator::AllRelevant),
            _ => Err(Error::invalid(format!("unknown AP denominator {s:?} (expected min or relevant)"))),
        }
    }
}

pub const PR_POINTS: usize = 101;
pub const DEFAULT_PRECISION_AT: &[usize] = &[1, 5, 10, 50, 100, 500, 1000, 5000];

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// `R`; `None` ranks the whole database.
    pub cutoff: Option<usize>,
    pub denominator: ApDenominator,
    pub precision_at: Vec<usize>,
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            cutoff: None,
            denominator: ApDenominator::default(),
            precision_at: DEFAULT_PRECISION_AT.to_vec(),
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub map: f64,
    /// AP per query in query order; `None` for queries without relevant items.
    pub per_query_ap: Vec<Option<f64>>,
    pub skipped_queries: usize,
    /// `(recall, precision)` on the 101-point recall grid.
    pub pr_curve: Vec<(f64, f64)>,
    /// `(k, mean precision@k)` for every requested `k ≤ R`.
    pub precision_at_k: Vec<(usize, f64)>,
    pub cutoff: usize,
    pub code_length: usize,
    pub mode: BinarizationMode,
    pub denominator: ApDenominator,
}

#[derive(Debug, Clone, Serialize)]
pub struct ApQuantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// JSON-facing summary of an [`EvalReport`].
#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub map: f64,
    pub ap_quantiles: ApQuantiles,
    pub num_queries: usize,
    pub evaluated_queries: usize,
    pub skipped_queries: usize,
    pub cutoff: usize,
    pub code_length: usize,
    pub mode: BinarizationMode,
    pub denominator: ApDenominator,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl EvalReport {
    pub fn evaluated_aps(&self) -> impl Iterator<Item = f64> + '_ {
        self.per_query_ap.iter().flatten().copied()
    }

    pub fn summary(&self) -> EvalSummary {
        let mut aps: Vec<f64> = self.evaluated_aps().collect();
        aps.sort_by(f64::total_cmp);
        EvalSummary {
            map: self.map,
            ap_quantiles: ApQuantiles {
                min: aps[0],
                q25: quantile(&aps, 0.25),
                median: quantile(&aps, 0.5),
                q75: quantile(&aps, 0.75),
                max: aps[aps.len() - 1],
            },
            num_queries: self.per_query_ap.len(),
            evaluated_queries: aps.len(),
            skipped_queries: self.skipped_queries,
            cutoff: self.cutoff,
            code_length: self.code_length,
            mode: self.mode,
            denominator: self.denominator,
        }
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serialises")
    }

    pub fn pr_csv(&self) -> String {
        let mut s = String::from("recall,precision\n");
        for (r, p) in &self.pr_curve {
            let _ = writeln!(s, "{r},{p}");
        }
        s
    }

    pub fn precision_at_k_csv(&self) -> String {
        let mut s = String::from("k,precision\n");
        for (k, p) in &self.precision_at_k {
            let _ = writeln!(s, "{k},{p}");
        }
        s
    }

    /// Writes `<prefix>.json`, `<prefix>_pr.csv` and `<prefix>_precision_at_k.csv`.
    pub fn write_files(&self, dir: &Path, prefix: &str) -> Result<()> {
        io::write_file(&dir.join(format!("{prefix}.json")), self.summary_json().as_bytes())?;
        io::write_file(&dir.join(format!("{prefix}_pr.csv")), self.pr_csv().as_bytes())?;
        io::write_file(
            &dir.join(format!("{prefix}_precision_at_k.csv")),
            self.precision_at_k_csv().as_bytes(),
        )
    }
}

struct QueryMetrics {
    ap: f64,
    /// Interpolated precision on the recall grid.
    pr: Vec<f64>,
    /// Hits within the first `k` for each requested `k`.
    hits_at: Vec<usize>,
}

fn query_metrics(
    ranking: &RankedList,
    qlabels: &[u8],
    db_labels: &Matrix<u8>,
    total_relevant: usize,
    options: &EvalOptions,
    ks: &[usize],
) -> QueryMetrics {
    let r = ranking.len();
    let mut hits = 0usize;
    let mut ap_sum = 0.0;
    let mut precision = Vec::with_capacity(r);
    let mut recall = Vec::with_capacity(r);
    let mut hits_at = vec![0usize; ks.len()];
    for (pos, &item) in ranking.indices.iter().enumerate() {
        let rank = pos + 1;
        if relevance(qlabels, db_labels.row(item)) {
            hits += 1;
            ap_sum += hits as f64 / rank as f64;
        }
        precision.push(hits as f64 / rank as f64);
        recall.push(hits as f64 / total_relevant as f64);
        for (h, &k) in hits_at.iter_mut().zip(ks) {
            if k == rank {
                *h = hits;
            }
        }
    }
    let denom = match options.denominator {
        ApDenominator::MinCutoffRelevant => total_relevant.min(r),
        ApDenominator::AllRelevant => total_relevant,
    };
    let ap = if denom == 0 { 0.0 } else { ap_sum / denom as f64 };

    // Suffix maximum of precision gives max precision at recall ≥ recall[k].
    let mut suffix = precision.clone();
    for k in (0..r.saturating_sub(1)).rev() {
        suffix[k] = suffix[k].max(suffix[k + 1]);
    }
    let mut pr = Vec::with_capacity(PR_POINTS);
    let mut k = 0;
    for i in 0..PR_POINTS {
        let level = i as f64 / (PR_POINTS - 1) as f64;
        while k < r && recall[k] < level {
            k += 1;
        }
        pr.push(if k < r { suffix[k] } else { 0.0 });
    }
    QueryMetrics { ap, pr, hits_at }
}

/// Scores precomputed rankings.
///
/// AP for a query is `(1/D) Σ_{k ≤ R, item k relevant} precision@k`, with
/// `D` chosen by [`ApDenominator`]. Queries without any relevant database
/// item are skipped and counted. The PR curve takes, at each recall level
/// `rᵢ = i/100`, the maximum precision at any rank with recall `≥ rᵢ`, then
/// averages over evaluated queries.
pub fn evaluate_rankings(
    rankings: &[RankedList],
    query_labels: &Matrix<u8>,
    db_labels: &Matrix<u8>,
    code_length: usize,
    mode: BinarizationMode,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if rankings.len() != query_labels.rows() {
        return Err(Error::DimensionMismatch {
            context: "rankings vs query labels",
            expected: query_labels.rows(),
            actual: rankings.len(),
        });
    }
    if query_labels.cols() != db_labels.cols() {
        return Err(Error::DimensionMismatch {
            context: "query vs database label width",
            expected: db_labels.cols(),
            actual: query_labels.cols(),
        });
    }
    if let Some(&bad) = rankings.iter().flat_map(|r| r.indices.iter()).find(|&&i| i >= db_labels.rows()) {
        return Err(Error::invalid(format!("ranked index {bad} beyond database of {}", db_labels.rows())));
    }
    let cutoff = options.cutoff.unwrap_or(db_labels.rows()).min(db_labels.rows());
    let ks: Vec<usize> = options.precision_at.iter().copied().filter(|&k| k >= 1 && k <= cutoff).collect();

    let mut per_query_ap = Vec::with_capacity(rankings.len());
    let mut pr_sum = vec![0.0; PR_POINTS];
    let mut hits_sum = vec![0usize; ks.len()];
    let mut ap_sum = 0.0;
    let mut evaluated = 0usize;
    for (q, ranking) in rankings.iter().enumerate() {
        let qlabels = query_labels.row(q);
        let total_relevant = db_labels.row_iter().filter(|d| relevance(qlabels, d)).count();
        if total_relevant == 0 {
            per_query_ap.push(None);
            continue;
        }
        let truncated;
        let ranking = if ranking.len() > cutoff {
            truncated = RankedList {
                indices: ranking.indices[..cutoff].to_vec(),
                distances: ranking.distances[..cutoff].to_vec(),
            };
            &truncated
        } else {
            ranking
        };
        let m = query_metrics(ranking, qlabels, db_labels, total_relevant, options, &ks);
        ap_sum += m.ap;
        evaluated += 1;
        per_query_ap.push(Some(m.ap));
        for (s, p) in pr_sum.iter_mut().zip(&m.pr) {
            *s += p;
        }
        for (s, h) in hits_sum.iter_mut().zip(&m.hits_at) {
            *s += h;
        }
    }
    if evaluated == 0 {
        return Err(Error::invalid("no query has a relevant database item; mAP is undefined"));
    }
    let n = evaluated as f64;
    let pr_curve = pr_sum
        .iter()
        .enumerate()
        .map(|(i, s)| (i as f64 / (PR_POINTS - 1) as f64, s / n))
        .collect();
    let precision_at_k = ks
        .iter()
        .zip(&hits_sum)
        .map(|(&k, &h)| (k, h as f64 / (k as f64 * n)))
        .collect();
    Ok(EvalReport {
        map: ap_sum / n,
        skipped_queries: rankings.len() - evaluated,
        per_query_ap,
        pr_curve,
        precision_at_k,
        cutoff,
        code_length,
        mode,
        denominator: options.denominator,
    })
}

/// Ranks the database for every query and scores the result.
pub fn evaluate(
    queries: &BinaryCodeSet,
    database: &BinaryCodeSet,
    query_labels: &Matrix<u8>,
    db_labels: &Matrix<u8>,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if queries.len() != query_labels.rows() {
        return Err(Error::DimensionMismatch {
            context: "query codes vs labels",
            expected: queries.len(),
            actual: query_labels.rows(),
        });
    }
    if database.len() != db_labels.rows() {
        return Err(Error::DimensionMismatch {
            context: "database codes vs labels",
            expected: database.len(),
            actual: db_labels.rows(),
        });
    }
    let rankings = search(queries, database, options.cutoff, options.threads)?;
    evaluate_rankings(&rankings, query_labels, db_labels, database.code_length(), database.mode, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(rows: &[&[i8]]) -> BinaryCodeSet {
        let k = rows[0].len();
        let m = Matrix::from_vec(rows.len(), k, rows.concat()).unwrap();
        BinaryCodeSet::from_signs(&m, BinarizationMode::Sign).unwrap()
    }

    #[test]
    fn binarize_sign_and_centered() {
        let u = Matrix::from_vec(1, 2, vec![0.3f64, -0.7]).unwrap();
        let b = binarize(&u, BinarizationMode::Sign, None).unwrap();
        assert_eq!(b.unpack().as_slice(), &[1, -1]);
        let b = binarize(&u, BinarizationMode::MeanCenteredSign, Some(&[0.3, -0.9])).unwrap();
        assert_eq!(b.unpack().as_slice(), &[1, 1]);
        assert!(binarize(&u, BinarizationMode::MeanCenteredSign, None).is_err());
        assert!(binarize(&u, BinarizationMode::MeanCenteredSign, Some(&[0.0])).is_err());
    }

    #[test]
    fn padding_is_zero_and_checked() {
        let b = codes(&[&[1; 70]]);
        assert_eq!(b.words()[1], (1u64 << 6) - 1);
        let bad = vec![u64::MAX, u64::MAX];
        assert!(BinaryCodeSet::from_words(1, 70, bad, BinarizationMode::Sign).is_err());
    }

    #[test]
    fn hamming_basics() {
        let a = codes(&[&[1; 64], &[-1; 64]]);
        assert_eq!(hamming_distance(a.code(0), a.code(0)).unwrap(), 0);
        assert_eq!(hamming_distance(a.code(0), a.code(1)).unwrap(), 64);
        let c = codes(&[&[1; 16]]);
        assert!(hamming_distance(a.code(0), c.code(0)).is_err());
    }

    #[test]
    fn search_ties_by_index() {
        let db = codes(&[&[1, 1, -1], &[1, -1, -1], &[1, 1, 1], &[1, 1, -1], &[-1, -1, 1]]);
        let q = codes(&[&[1, 1, -1]]);
        let r = search(&q, &db, None, 1).unwrap();
        assert_eq!(r[0].indices, vec![0, 3, 1, 2, 4]);
        assert_eq!(r[0].distances, vec![0, 0, 1, 1, 3]);
        let r2 = search(&q, &db, Some(3), 1).unwrap();
        assert_eq!(r2[0].indices, vec![0, 3, 1]);
        let r3 = search(&q, &db, Some(0), 1).unwrap();
        assert!(r3[0].is_empty());
        assert_eq!(search(&q, &db, Some(3), 4).unwrap(), r2);
        assert!(search(&codes(&[&[1, 1]]), &db, None, 1).is_err());
    }

    #[test]
    fn relevance_cases() {
        assert!(relevance(&[0, 1, 0], &[0, 1, 0]));
        assert!(!relevance(&[1, 0, 0], &[0, 1, 1]));
        assert!(relevance(&[1, 0, 1], &[0, 1, 1]));
    }

    fn ranking(indices: Vec<usize>) -> RankedList {
        let distances = vec![0; indices.len()];
        RankedList { indices, distances }
    }

    #[test]
    fn ap_hand_example() {
        // ranking (rel, non, rel), two relevant total, R = 3
        let db = Matrix::from_vec(3, 2, vec![1, 0, 0, 1, 1, 0]).unwrap();
        let q = Matrix::from_vec(1, 2, vec![1, 0]).unwrap();
        let opts = EvalOptions {
            cutoff: Some(3),
            ..Default::default()
        };
        let rep = evaluate_rankings(&[ranking(vec![0, 1, 2])], &q, &db, 8, BinarizationMode::Sign, &opts).unwrap();
        assert!((rep.map - 5.0 / 6.0).abs() < 1e-15);
        let rep = evaluate_rankings(&[ranking(vec![0, 2, 1])], &q, &db, 8, BinarizationMode::Sign, &opts).unwrap();
        assert_eq!(rep.map, 1.0);
        assert!(rep.pr_curve.iter().all(|&(_, p)| p == 1.0));
    }

    #[test]
    fn ap_denominators_differ_under_cutoff() {
        // 3 relevant items, R = 2, both retrieved relevant.
        let db = Matrix::from_vec(4, 1, vec![1, 1, 1, 1]).unwrap();
        let q = Matrix::from_vec(1, 1, vec![1]).unwrap();
        let mut opts = EvalOptions {
            cutoff: Some(2),
            ..Default::default()
        };
        let r = [ranking(vec![0, 1, 2, 3])];
        let rep = evaluate_rankings(&r, &q, &db, 8, BinarizationMode::Sign, &opts).unwrap();
        assert_eq!(rep.map, 1.0);
        opts.denominator = ApDenominator::AllRelevant;
        let rep = evaluate_rankings(&r, &q, &db, 8, BinarizationMode::Sign, &opts).unwrap();
        assert_eq!(rep.map, 0.5);
    }

    #[test]
    fn skipped_queries_and_errors() {
        let db = Matrix::from_vec(2, 2, vec![1, 0, 1, 0]).unwrap();
        let q = Matrix::from_vec(2, 2, vec![1, 0, 0, 1]).unwrap();
        let r = [ranking(vec![0, 1]), ranking(vec![0, 1])];
        let rep = evaluate_rankings(&r, &q, &db, 8, BinarizationMode::Sign, &EvalOptions::default()).unwrap();
        assert_eq!(rep.skipped_queries, 1);
        assert_eq!(rep.per_query_ap, vec![Some(1.0), None]);
        let q2 = Matrix::from_vec(1, 2, vec![0, 1]).unwrap();
        assert!(evaluate_rankings(&r[..1], &q2, &db, 8, BinarizationMode::Sign, &EvalOptions::default()).is_err());
    }

    #[test]
    fn codes_file_round_trip() {
        let b = codes(&[&[1; 70], &[-1; 70], &[1; 70]]);
        let bytes = b.to_bytes();
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + 1 + 3 * 2 * 8);
        assert_eq!(BinaryCodeSet::from_bytes(&bytes).unwrap(), b);
        assert!(matches!(
            BinaryCodeSet::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn summary_json_fields() {
        let db = Matrix::from_vec(3, 2, vec![1, 0, 0, 1, 1, 0]).unwrap();
        let q = Matrix::from_vec(1, 2, vec![1, 0]).unwrap();
        let rep = evaluate_rankings(&[ranking(vec![0, 1, 2])], &q, &db, 8, BinarizationMode::Sign, &EvalOptions::default())
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&rep.summary_json()).unwrap();
        assert!(v["map"].as_f64().is_some());
        assert_eq!(v["skipped_queries"], 0);
        assert_eq!(v["ap_quantiles"]["median"].as_f64().unwrap(), rep.map);
        assert!(rep.pr_csv().starts_with("recall,precision\n0,1\n"));
        assert_eq!(rep.precision_at_k, vec![(1, 1.0)]);
    }
}
