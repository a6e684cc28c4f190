use serde::Serialize;

use crate::error::{Error, Result};
use crate::hadamard::TargetCode;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Classification loss family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LossMode {
    /// Softmax cross entropy over single-label class indices.
    #[serde(rename = "ce")]
    CrossEntropy,
    /// Per-class sigmoid binary cross entropy over multi-hot labels.
    #[serde(rename = "bce")]
    BinaryCrossEntropy,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ce" => Ok(LossMode::CrossEntropy),
            "bce" => Ok(LossMode::BinaryCrossEntropy),
            _ => Err(Error::invalid(format!("unknown loss mode {s:?} (expected ce or bce)"))),
        }
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossMode::CrossEntropy => "ce",
            LossMode::BinaryCrossEntropy => "bce",
        })
    }
}

/// Classification targets for a batch.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassLabels {
    Classes(Vec<usize>),
    MultiHot(Matrix<u8>),
}

impl ClassLabels {
    pub fn len(&self) -> usize {
        match self {
            ClassLabels::Classes(c) => c.len(),
            ClassLabels::MultiHot(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mode(&self) -> LossMode {
        match self {
            ClassLabels::Classes(_) => LossMode::CrossEntropy,
            ClassLabels::MultiHot(_) => LossMode::BinaryCrossEntropy,
        }
    }
}

/// Loss values of one objective evaluation. `total = hadamard + lambda · classification`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossBreakdown {
    pub hadamard: f64,
    pub classification: f64,
    pub total: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    pub fn new(hadamard: f64, classification: f64, lambda: f64) -> Self {
        Self {
            hadamard,
            classification,
            total: hadamard + lambda * classification,
            lambda,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.hadamard.is_finite() && self.classification.is_finite() && self.total.is_finite()
    }
}

/// Masked squared error between tanh outputs and target codes.
///
/// `value = 1/(2B) Σᵢ Σⱼ mᵢⱼ (uᵢⱼ − tᵢⱼ)²`, gradient `1/B · m ⊙ (u − t)`.
pub fn hadamard_loss<T: Scalar>(u: &Matrix<T>, targets: &[TargetCode]) -> Result<(T, Matrix<T>)> {
    if targets.len() != u.rows() {
        return Err(Error::DimensionMismatch {
            context: "hadamard loss batch size",
            expected: u.rows(),
            actual: targets.len(),
        });
    }
    let batch = T::from_usize(u.rows().max(1)).unwrap();
    let mut grad = Matrix::zeros(u.rows(), u.cols());
    let mut sum = T::zero();
    for (i, t) in targets.iter().enumerate() {
        if t.len() != u.cols() {
            return Err(Error::DimensionMismatch {
                context: "hadamard loss code length",
                expected: u.cols(),
                actual: t.len(),
            });
        }
        let g = grad.row_mut(i);
        for (j, &uij) in u.row(i).iter().enumerate() {
            if t.mask[j] {
                let diff = uij - T::from_i8(t.values[j]).unwrap();
                sum += diff * diff;
                g[j] = diff / batch;
            }
        }
    }
    Ok((sum / (batch + batch), grad))
}

/// Mean softmax cross entropy, stabilised by subtracting the row maximum.
/// Gradient is `(softmax − onehot) / B`.
pub fn cross_entropy_loss<T: Scalar>(logits: &Matrix<T>, classes: &[usize]) -> Result<(T, Matrix<T>)> {
    if classes.len() != logits.rows() {
        return Err(Error::DimensionMismatch {
            context: "cross entropy batch size",
            expected: logits.rows(),
            actual: classes.len(),
        });
    }
    let c = logits.cols();
    if let Some(&bad) = classes.iter().find(|&&k| k >= c) {
        return Err(Error::invalid(format!("class index {bad} out of range for {c} classes")));
    }
    let batch = T::from_usize(logits.rows().max(1)).unwrap();
    let mut grad = Matrix::zeros(logits.rows(), c);
    let mut sum = T::zero();
    for (i, &k) in classes.iter().enumerate() {
        let z = logits.row(i);
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let denom: T = z.iter().map(|&v| (v - max).exp()).sum();
        let log_denom = denom.ln();
        sum += log_denom - (z[k] - max);
        let g = grad.row_mut(i);
        for (j, &v) in z.iter().enumerate() {
            let p = (v - max).exp() / denom;
            g[j] = (p - if j == k { T::one() } else { T::zero() }) / batch;
        }
    }
    Ok((sum / batch, grad))
}

/// Mean over batch and classes of sigmoid binary cross entropy, using
/// `max(z, 0) − z·y + ln(1 + e^{−|z|})`. Gradient is `(σ(z) − y) / (B·C)`.
pub fn bce_loss<T: Scalar>(logits: &Matrix<T>, labels: &Matrix<u8>) -> Result<(T, Matrix<T>)> {
    if labels.rows() != logits.rows() || labels.cols() != logits.cols() {
        return Err(Error::DimensionMismatch {
            context: "bce label shape",
            expected: logits.rows() * logits.cols(),
            actual: labels.rows() * labels.cols(),
        });
    }
    if labels.as_slice().iter().any(|&y| y > 1) {
        return Err(Error::invalid("bce labels must be 0 or 1"));
    }
    let count = T::from_usize((logits.rows() * logits.cols()).max(1)).unwrap();
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut sum = T::zero();
    for (idx, (&z, &y)) in logits.as_slice().iter().zip(labels.as_slice()).enumerate() {
        let y = T::from_u8(y).unwrap();
        sum += z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p();
        grad.as_mut_slice()[idx] = (sigmoid(z) - y) / count;
    }
    Ok((sum / count, grad))
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}
