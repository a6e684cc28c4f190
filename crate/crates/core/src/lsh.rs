//! Random-hyperplane LSH baseline: `bit_j(x) = sign(⟨w_j, x⟩)` with
//! Gaussian `w_j`.

use crate::dataset::FeatureSet;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::retrieval::{BinarizationMode, BinaryCodeSet};
use crate::rng::{self, Gaussian};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomHyperplanes {
    /// `K × D`, one hyperplane normal per row.
    normals: Matrix<f64>,
}

impl RandomHyperplanes {
    /// Normals drawn with Box–Muller from the `LSH` sub-stream of `seed`.
    pub fn new(dim: usize, code_length: usize, seed: u64) -> Result<Self> {
        if dim == 0 || code_length == 0 {
            return Err(Error::invalid("LSH needs positive dimension and code length"));
        }
        let mut g = Gaussian::new(rng::sub_rng(seed, rng::stream::LSH));
        Ok(Self {
            normals: Matrix::from_fn(code_length, dim, |_, _| g.sample()),
        })
    }

    pub fn code_length(&self) -> usize {
        self.normals.rows()
    }

    pub fn hash(&self, features: &FeatureSet) -> Result<BinaryCodeSet> {
        if features.dim() != self.normals.cols() {
            return Err(Error::DimensionMismatch {
                context: "LSH feature dimension",
                expected: self.normals.cols(),
                actual: features.dim(),
            });
        }
        let signs = Matrix::from_fn(features.len(), self.code_length(), |i, j| {
            let p: f64 = features
                .row(i)
                .iter()
                .zip(self.normals.row(j))
                .map(|(&x, &w)| x as f64 * w)
                .sum();
            if p >= 0.0 {
                1
            } else {
                -1
            }
        });
        BinaryCodeSet::from_signs(&signs, BinarizationMode::Sign)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sign_consistent() {
        let f = FeatureSet::new(Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, -2.0, -3.0]).unwrap()).unwrap();
        let a = RandomHyperplanes::new(3, 16, 4).unwrap();
        let b = RandomHyperplanes::new(3, 16, 4).unwrap();
        assert_eq!(a, b);
        let codes = a.hash(&f).unwrap();
        // x and -x land on opposite sides of every hyperplane
        for j in 0..16 {
            assert_eq!(codes.bit(0, j), -codes.bit(1, j));
        }
        let g = FeatureSet::new(Matrix::zeros(1, 2)).unwrap();
        assert!(a.hash(&g).is_err());
    }
}
