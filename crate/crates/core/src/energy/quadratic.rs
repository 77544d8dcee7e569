//! Quadratic trace model `E(U) = tr(U^T A U) / 2` for a fixed symmetric
//! matrix.
//!
//! Its minimizer over n-frames is the span of the n lowest eigenvectors of
//! `A`, which makes it the oracle-checkable test bed for the solvers: the
//! gradient is linear, the Hessian is constant and the exact answer comes
//! from a dense eigendecomposition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EnergyModel;
use crate::error::{Error, Result};
use crate::kernels::DenseMatrix;

#[derive(Debug, Clone)]
pub struct QuadraticTraceModel {
    a: DenseMatrix,
    frame_width: usize,
}

impl QuadraticTraceModel {
    pub fn new(a: DenseMatrix, frame_width: usize) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::ShapeMismatch {
                expected: "square".into(),
                got: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        if frame_width == 0 || frame_width > a.nrows() {
            return Err(Error::InvalidInput(format!(
                "frame width {frame_width} out of range for a {} dimensional model",
                a.nrows()
            )));
        }
        let asym = (&a - a.transpose()).norm();
        if asym > 1e-12 * a.norm().max(1.0) {
            return Err(Error::InvalidInput(
                "quadratic model matrix must be symmetric".into(),
            ));
        }
        Ok(Self { a, frame_width })
    }

    /// Symmetrized Gaussian matrix from a seed.
    pub fn seeded(dim: usize, frame_width: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DenseMatrix::from_fn(dim, dim, |_, _| rng.sample(rand_distr::StandardNormal));
        Self::new((&g + g.transpose()) * 0.5, frame_width)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }
}

impl EnergyModel for QuadraticTraceModel {
    fn ambient_dim(&self) -> usize {
        self.a.nrows()
    }

    fn frame_width(&self) -> usize {
        self.frame_width
    }

    fn value(&self, u: &DenseMatrix) -> f64 {
        0.5 * (u.transpose() * &self.a * u).trace()
    }

    fn euclid_grad(&self, u: &DenseMatrix) -> DenseMatrix {
        &self.a * u
    }

    fn euclid_hess_apply(&self, _u: &DenseMatrix, d: &DenseMatrix) -> DenseMatrix {
        &self.a * d
    }

    fn hamiltonian_apply(&self, _u: &DenseMatrix, x: &DenseMatrix) -> DenseMatrix {
        &self.a * x
    }

    fn value_delta(&self, u_from: &DenseMatrix, u_to: &DenseMatrix) -> f64 {
        // tr(U1^T A U1) - tr(U0^T A U0) = tr((U1 - U0)^T A (U1 + U0))
        // exactly, since A is symmetric; evaluating the right-hand side
        // avoids the catastrophic cancellation of two absolute energies.
        let diff = u_to - u_from;
        let sum = u_to + u_from;
        0.5 * (&self.a * sum).dot(&diff)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GrassmannTangent, StiefelPoint};
    use rand::SeedableRng;

    #[test]
    fn hessian_apply_is_exactly_a_times_d() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let model = QuadraticTraceModel::seeded(6, 2, 3).unwrap();
        let u = StiefelPoint::random(&mut rng, 6, 2);
        let d = GrassmannTangent::random(&mut rng, &u);
        let h = model.euclid_hess_apply(u.matrix(), d.matrix());
        assert_eq!(h, model.matrix() * d.matrix());
    }

    #[test]
    fn gradient_agrees_with_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let model = QuadraticTraceModel::seeded(6, 2, 4).unwrap();
        let u = StiefelPoint::random(&mut rng, 6, 2);
        let g = model.euclid_grad(u.matrix());
        let h = 1e-5;
        let mut fd = DenseMatrix::zeros(6, 2);
        for i in 0..6 {
            for j in 0..2 {
                let mut up = u.matrix().clone();
                let mut dn = u.matrix().clone();
                up[(i, j)] += h;
                dn[(i, j)] -= h;
                fd[(i, j)] = (model.value(&up) - model.value(&dn)) / (2.0 * h);
            }
        }
        assert!((&fd - &g).norm() <= 1e-6 * g.norm());
    }

    #[test]
    fn rejects_asymmetric_matrix() {
        let mut a = DenseMatrix::identity(4, 4);
        a[(0, 1)] = 0.5;
        assert!(QuadraticTraceModel::new(a, 2).is_err());
    }
}
