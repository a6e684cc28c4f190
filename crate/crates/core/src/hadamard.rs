//! Hadamard matrices and class codebooks.
//!
//! A codebook assigns each of `C` classes a `K`-bit ±1 codeword. When a
//! Sylvester matrix of order `K` has enough non-trivial rows the codewords
//! are taken from it directly and are exactly orthogonal and balanced.
//! Otherwise a larger order `K*` is used and its rows are compressed to `K`
//! bits by a seeded Gaussian projection followed by `sign`.

use std::path::Path;

use rand::seq::index;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{self, Reader, Writer};
use crate::linalg::Matrix;
use crate::rng::{self, Gaussian};
use crate::scalar::Scalar;

/// Square ±1 matrix in Sylvester form. Only constructible via [`sylvester`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HadamardMatrix {
    order: usize,
    entries: Vec<i8>,
}

impl HadamardMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.entries[i * self.order + j]
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.entries[i * self.order..(i + 1) * self.order]
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }
}

/// Builds the Sylvester Hadamard matrix of the given power-of-two order by
/// repeated block doubling `H₂ₙ = [[Hₙ, Hₙ], [Hₙ, −Hₙ]]` from `H₁ = [1]`.
pub fn sylvester(order: usize) -> Result<HadamardMatrix> {
    if order == 0 || !order.is_power_of_two() {
        return Err(Error::invalid(format!(
            "Hadamard order must be a power of two (1, 2, 4, ...), got {order}"
        )));
    }
    let mut n = 1;
    let mut entries = vec![1i8];
    while n < order {
        let m = 2 * n;
        let mut next = vec![0i8; m * m];
        for i in 0..n {
            for j in 0..n {
                let v = entries[i * n + j];
                next[i * m + j] = v;
                next[i * m + j + n] = v;
                next[(i + n) * m + j] = v;
                next[(i + n) * m + j + n] = -v;
            }
        }
        entries = next;
        n = m;
    }
    Ok(HadamardMatrix { order, entries })
}

/// Smallest power of two `K*` with `K* ≥ K` and `K* ≥ C + 1`.
///
/// The extra margin over `C` leaves `C` candidates once the all-ones row
/// (index 0) is excluded.
pub fn select_order(code_length: usize, num_classes: usize) -> usize {
    code_length
        .max(num_classes + 1)
        .max(1)
        .next_power_of_two()
}

/// `K* × K` matrix of i.i.d. standard normal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix<T> {
    pub seed: u64,
    pub matrix: Matrix<T>,
}

impl<T: Scalar> ProjectionMatrix<T> {
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }
}

/// Samples a `order × code_length` Gaussian matrix, row-major, with Box–Muller
/// variates drawn from [`rng::rng_from_seed`]`(seed)`.
pub fn sample_projection<T: Scalar>(
    order: usize,
    code_length: usize,
    seed: u64,
) -> Result<ProjectionMatrix<T>> {
    if order <= code_length {
        return Err(Error::invalid(format!(
            "projection needs order > code length, got order {order} and code length {code_length}"
        )));
    }
    let mut g = Gaussian::new(rng::rng_from_seed(seed));
    let matrix = Matrix::from_fn(order, code_length, |_, _| T::from_f64_lossy(g.sample()));
    Ok(ProjectionMatrix { seed, matrix })
}

/// `sign(H · T)` with `sign(0) = +1`.
///
/// `H · T` is evaluated with an in-place fast Walsh–Hadamard transform over
/// the rows of `T`, which equals the dense product for Sylvester-ordered `H`.
pub fn project_and_sign<T: Scalar>(
    h: &HadamardMatrix,
    t: &ProjectionMatrix<T>,
) -> Result<Matrix<i8>> {
    if h.order() != t.rows() {
        return Err(Error::DimensionMismatch {
            context: "projection rows vs Hadamard order",
            expected: h.order(),
            actual: t.rows(),
        });
    }
    let product = walsh_hadamard_rows(&t.matrix);
    Ok(product.map(|v| v.sign_pm1()))
}

/// `H · M` for the Sylvester matrix `H` of order `M.rows()` (a power of two).
fn walsh_hadamard_rows<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let n = m.rows();
    let cols = m.cols();
    debug_assert!(n.is_power_of_two());
    let mut out = m.clone();
    let data = out.as_mut_slice();
    let mut half = 1;
    while half < n {
        for block in (0..n).step_by(2 * half) {
            for i in block..block + half {
                let (lo, hi) = data.split_at_mut((i + half) * cols);
                let a = &mut lo[i * cols..(i + 1) * cols];
                let b = &mut hi[..cols];
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    let (s, d) = (*x + *y, *x - *y);
                    *x = s;
                    *y = d;
                }
            }
        }
        half *= 2;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Codewords are rows of the order-`K` Sylvester matrix.
    Direct,
    /// Codewords are rows of `sign(H* · T)` for a larger order `K*`.
    Projected,
}

impl Provenance {
    fn tag(self) -> u8 {
        match self {
            Provenance::Direct => 0,
            Provenance::Projected => 1,
        }
    }
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::Direct => "direct",
            Provenance::Projected => "projected",
        })
    }
}

/// Per-class ±1 target codewords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    pub seed: u64,
    pub provenance: Provenance,
    /// Source row indices in the order-`K*` matrix. Not persisted, so `None`
    /// for codebooks read from disk.
    pub selected_indices: Option<Vec<usize>>,
    codewords: Matrix<i8>,
}

impl Codebook {
    /// Wraps an explicit ±1 matrix (one row per class).
    pub fn from_codewords(codewords: Matrix<i8>, provenance: Provenance, seed: u64) -> Result<Self> {
        if codewords.rows() == 0 || codewords.cols() == 0 {
            return Err(Error::invalid("codebook must have at least one class and one bit"));
        }
        if codewords.as_slice().iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::invalid("codeword entries must be -1 or +1"));
        }
        Ok(Self {
            seed,
            provenance,
            selected_indices: None,
            codewords,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.codewords.rows()
    }

    pub fn code_length(&self) -> usize {
        self.codewords.cols()
    }

    /// Order of the Hadamard matrix the codewords came from.
    pub fn order(&self) -> usize {
        match self.provenance {
            Provenance::Direct => self.code_length(),
            Provenance::Projected => select_order(self.code_length(), self.num_classes()),
        }
    }

    pub fn codeword(&self, class: usize) -> &[i8] {
        self.codewords.row(class)
    }

    pub fn codewords(&self) -> &Matrix<i8> {
        &self.codewords
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(b"HCCB", 1);
        w.u32(self.num_classes() as u32);
        w.u32(self.code_length() as u32);
        w.u64(self.seed);
        w.u8(self.provenance.tag());
        for &v in self.codewords.as_slice() {
            w.i8(v);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open("HCCB", bytes, b"HCCB", 1)?;
        let c = r.u32()? as usize;
        let k = r.u32()? as usize;
        let seed = r.u64()?;
        let provenance = match r.u8()? {
            0 => Provenance::Direct,
            1 => Provenance::Projected,
            t => return Err(r.malformed(format!("unknown provenance tag {t}"))),
        };
        let payload = r.take(c * k)?;
        r.expect_end()?;
        let entries: Vec<i8> = payload.iter().map(|&b| b as i8).collect();
        if entries.iter().any(|&v| v != 1 && v != -1) {
            return Err(r.malformed("codeword entries must be -1 or +1"));
        }
        Self::from_codewords(Matrix::from_vec(c, k, entries)?, provenance, seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&io::read_file(path.as_ref())?)
    }
}

/// Builds the class codebook for `num_classes` classes and `code_length`
/// bits.
///
/// `K* = select_order(K, C)`. If `K* = K` the codewords are `C` distinct
/// non-zero-index rows of `sylvester(K)`; otherwise they are `C` distinct
/// non-zero-index rows of `sign(sylvester(K*) · T)` with `T` drawn by
/// [`sample_projection`]. Row indices are sampled uniformly without
/// replacement. Projection and selection use separate sub-streams of `seed`.
pub fn build_codebook(code_length: usize, num_classes: usize, seed: u64) -> Result<Codebook> {
    if code_length < 2 {
        return Err(Error::invalid(format!("code length must be at least 2, got {code_length}")));
    }
    if num_classes < 1 {
        return Err(Error::invalid("codebook needs at least one class"));
    }
    let order = select_order(code_length, num_classes);
    let h = sylvester(order)?;

    let (source, provenance) = if order == code_length {
        let m = Matrix::from_vec(order, order, h.entries().to_vec())?;
        (m, Provenance::Direct)
    } else {
        let t = sample_projection::<f64>(
            order,
            code_length,
            rng::derive_seed(seed, rng::stream::PROJECTION),
        )?;
        (project_and_sign(&h, &t)?, Provenance::Projected)
    };

    let mut select_rng = rng::sub_rng(seed, rng::stream::CODEWORD_SELECTION);
    let selected: Vec<usize> = index::sample(&mut select_rng, order - 1, num_classes)
        .into_iter()
        .map(|i| i + 1)
        .collect();

    Ok(Codebook {
        seed,
        provenance,
        codewords: source.select_rows(&selected),
        selected_indices: Some(selected),
    })
}

/// Regression target for one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetCode {
    pub values: Vec<i8>,
    /// `false` where the target bit is 0 (unconstrained).
    pub mask: Vec<bool>,
}

impl TargetCode {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Target code for a label row.
///
/// With a single positive label this is that class's codeword. With several,
/// each bit is the sign of the sum of the carried classes' codewords; bits
/// where the sum is 0 are masked out.
pub fn make_target(cb: &Codebook, labels: &[u8]) -> Result<TargetCode> {
    if labels.len() != cb.num_classes() {
        return Err(Error::DimensionMismatch {
            context: "label row width vs codebook classes",
            expected: cb.num_classes(),
            actual: labels.len(),
        });
    }
    let k = cb.code_length();
    let mut sum = vec![0i32; k];
    let mut positives = 0;
    for (c, &y) in labels.iter().enumerate() {
        if y != 0 {
            positives += 1;
            for (s, &v) in sum.iter_mut().zip(cb.codeword(c)) {
                *s += v as i32;
            }
        }
    }
    if positives == 0 {
        return Err(Error::invalid("label row has no positive entry"));
    }
    let values: Vec<i8> = sum.iter().map(|&s| s.signum() as i8).collect();
    let mask = values.iter().map(|&v| v != 0).collect();
    Ok(TargetCode { values, mask })
}
