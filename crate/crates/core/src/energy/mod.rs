//! Energy functionals over frames and their first and second derivatives,
//! both in the ambient space and on the quotient of frames by rotations.
//!
//! A model exposes its value, Euclidean gradient, Hessian-apply and the
//! symmetric operator `H(U)` whose action on `U` gives the gradient. All
//! of these are defined on arbitrary `n_g x n` matrices; the quotient
//! gradient and Hessian wrappers below restrict to orthonormal frames.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{GrassmannTangent, StiefelPoint};
use crate::kernels::{DenseMatrix, DenseVector};

mod ks1d;
mod quadratic;

pub use ks1d::{Atom, KohnSham1D, KsParams};
pub use quadratic::QuadraticTraceModel;

/// A smooth energy over `n_g x n` matrices, invariant under right
/// rotations of the frame.
pub trait EnergyModel {
    fn ambient_dim(&self) -> usize;
    fn frame_width(&self) -> usize;

    /// `E(U)`; defined for arbitrary matrices of the right shape.
    fn value(&self, u: &DenseMatrix) -> f64;

    /// Ambient gradient; equals `H(U) U`.
    fn euclid_grad(&self, u: &DenseMatrix) -> DenseMatrix;

    /// Ambient Hessian applied to a direction.
    fn euclid_hess_apply(&self, u: &DenseMatrix, d: &DenseMatrix) -> DenseMatrix;

    /// Action of the symmetric operator `H(U)` on a block `X`.
    fn hamiltonian_apply(&self, u: &DenseMatrix, x: &DenseMatrix) -> DenseMatrix;

    /// Energy difference `E(u_to) - E(u_from)`.
    ///
    /// Line searches compare energies of nearby frames whose difference is
    /// far below the rounding noise of two absolute evaluations; models
    /// override this with a cancellation-free form so step acceptance
    /// stays meaningful down to gradient norms near 1e-10.
    fn value_delta(&self, u_from: &DenseMatrix, u_to: &DenseMatrix) -> f64 {
        self.value(u_to) - self.value(u_from)
    }
}

/// Which curvature operator the solvers use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    /// Full second derivative of the energy.
    Exact,
    /// `H(U) D` in place of the full Hessian-apply; exact for models whose
    /// gradient is linear in `U`, and a close approximation otherwise.
    Approx,
}

impl FromStr for HessianMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(HessianMode::Exact),
            "approx" => Ok(HessianMode::Approx),
            other => Err(Error::Config(format!(
                "unknown hessian mode '{other}' (expected exact|approx)"
            ))),
        }
    }
}

impl HessianMode {
    pub fn name(&self) -> &'static str {
        match self {
            HessianMode::Exact => "exact",
            HessianMode::Approx => "approx",
        }
    }
}

/// Electron density `rho_i = sum_j U_ij^2`, the diagonal of `U U^T`.
pub fn density(u: &DenseMatrix) -> DenseVector {
    DenseVector::from_fn(u.nrows(), |i, _| u.row(i).iter().map(|x| x * x).sum())
}

/// Gradient on the quotient of frames: `(I - U U^T) grad E(U)`.
pub fn grassmann_grad<M: EnergyModel + ?Sized>(
    model: &M,
    u: &StiefelPoint,
) -> Result<GrassmannTangent> {
    let g = model.euclid_grad(u.matrix());
    let sigma = u.matrix().transpose() * &g;
    GrassmannTangent::new(u.clone(), g - u.matrix() * sigma)
}

/// Quotient Hessian as an operator at a fixed base point.
///
/// Caches `Sigma = U^T grad E(U)` so repeated applies inside an inner
/// solver do not recompute the gradient.
pub struct GrassmannHessian<'a, M: EnergyModel + ?Sized> {
    model: &'a M,
    base: &'a StiefelPoint,
    sigma: DenseMatrix,
    mode: HessianMode,
}

impl<'a, M: EnergyModel + ?Sized> GrassmannHessian<'a, M> {
    pub fn new(model: &'a M, base: &'a StiefelPoint, mode: HessianMode) -> Self {
        let g = model.euclid_grad(base.matrix());
        Self::with_gradient(model, base, &g, mode)
    }

    /// As [`GrassmannHessian::new`] with the ambient gradient already in
    /// hand.
    pub fn with_gradient(
        model: &'a M,
        base: &'a StiefelPoint,
        euclid_grad: &DenseMatrix,
        mode: HessianMode,
    ) -> Self {
        let sigma = base.matrix().transpose() * euclid_grad;
        Self {
            model,
            base,
            sigma,
            mode,
        }
    }

    /// Applies the operator to a matrix assumed tangent at the base:
    /// `(I - U U^T) A[d] - d Sigma`, with `A` the ambient Hessian or
    /// `H(U)` depending on the mode.
    pub fn apply(&self, d: &DenseMatrix) -> DenseMatrix {
        let u = self.base.matrix();
        let ad = match self.mode {
            HessianMode::Exact => self.model.euclid_hess_apply(u, d),
            HessianMode::Approx => self.model.hamiltonian_apply(u, d),
        };
        let projected = &ad - u * (u.transpose() * &ad);
        projected - d * &self.sigma
    }

    /// Bilinear form `tr(d2^T apply(d1))`.
    pub fn quad_form(&self, d1: &DenseMatrix, d2: &DenseMatrix) -> f64 {
        self.apply(d1).dot(d2)
    }

    /// `Sigma = U^T grad E(U)` at the base point.
    pub fn sigma(&self) -> &DenseMatrix {
        &self.sigma
    }
}

/// Quotient Hessian applied to a tangent direction.
pub fn grassmann_hess_apply<M: EnergyModel + ?Sized>(
    model: &M,
    u: &StiefelPoint,
    d: &GrassmannTangent,
    mode: HessianMode,
) -> Result<GrassmannTangent> {
    if d.base().matrix() != u.matrix() {
        return Err(Error::BaseMismatch);
    }
    let op = GrassmannHessian::new(model, u, mode);
    GrassmannTangent::new(u.clone(), op.apply(d.matrix()))
}

/// Residual of the first-order condition `H(U) U = U Lambda`:
/// `||H(U)U - U (U^T H(U) U)||_F`.
pub fn first_order_residual<M: EnergyModel + ?Sized>(model: &M, u: &StiefelPoint) -> f64 {
    let hu = model.hamiltonian_apply(u.matrix(), u.matrix());
    let lambda = u.matrix().transpose() * &hu;
    (hu - u.matrix() * lambda).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn density_examples() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert_eq!(density(&e1).as_slice(), &[1.0, 0.0, 0.0]);

        let mut u = DMatrix::zeros(4, 2);
        u[(0, 0)] = 1.0;
        u[(1, 1)] = 1.0;
        assert_eq!(density(&u).as_slice(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn density_is_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let u = StiefelPoint::random(&mut rng, 6, 2);
        let c = 0.28_f64;
        let s = (1.0 - c * c).sqrt();
        let p = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let rotated = u.matrix() * p;
        assert!((density(u.matrix()) - density(&rotated)).norm() < 1e-14);
        let total: f64 = density(u.matrix()).sum();
        assert!((total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grassmann_grad_matches_projection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let model = QuadraticTraceModel::seeded(8, 3, 5).unwrap();
        let u = StiefelPoint::random(&mut rng, 8, 3);
        let g = grassmann_grad(&model, &u).unwrap();
        let oracle = geometry::project_tangent(&u, &model.euclid_grad(u.matrix())).unwrap();
        assert!((g.matrix() - oracle.matrix()).norm() < 1e-12 * g.norm().max(1.0));
        assert!((u.matrix().transpose() * g.matrix()).norm() < 1e-11);
    }

    #[test]
    fn grassmann_grad_vanishes_on_eigenblocks() {
        let a = DMatrix::from_diagonal(&DenseVector::from_iterator(
            6,
            (1..=6).map(|k| k as f64),
        ));
        let model = QuadraticTraceModel::new(a, 2).unwrap();
        let mut frame = DMatrix::zeros(6, 2);
        frame[(2, 0)] = 1.0;
        frame[(4, 1)] = 1.0;
        let u = StiefelPoint::new(frame).unwrap();
        let g = grassmann_grad(&model, &u).unwrap();
        assert!(g.norm() < 1e-14);
    }

    #[test]
    fn exact_and_approx_coincide_on_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let model = QuadraticTraceModel::seeded(7, 2, 9).unwrap();
        let u = StiefelPoint::random(&mut rng, 7, 2);
        let d = GrassmannTangent::random(&mut rng, &u);
        let exact = grassmann_hess_apply(&model, &u, &d, HessianMode::Exact).unwrap();
        let approx = grassmann_hess_apply(&model, &u, &d, HessianMode::Approx).unwrap();
        assert!((exact.matrix() - approx.matrix()).norm() < 1e-13 * exact.norm().max(1.0));
    }

    #[test]
    fn hessian_bilinear_form_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let model = KohnSham1D::new(KsParams::example(24, 2)).unwrap();
        let u = StiefelPoint::random(&mut rng, 24, 2);
        let d1 = GrassmannTangent::random(&mut rng, &u);
        let d2 = GrassmannTangent::random(&mut rng, &u);
        for mode in [HessianMode::Exact, HessianMode::Approx] {
            let op = GrassmannHessian::new(&model, &u, mode);
            let lhs = op.quad_form(d1.matrix(), d2.matrix());
            let rhs = op.quad_form(d2.matrix(), d1.matrix());
            assert!(
                (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0),
                "{mode:?}: {lhs} vs {rhs}"
            );
        }
    }
}
