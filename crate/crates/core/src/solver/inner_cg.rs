//! Inner direction solver: conjugate gradient iteration on the frame
//! manifold for the local quadratic subproblem
//!
//! `Ebar(V) = <g, P V> + (1/2) Hess[P V, P V]`,  `P = I - U U^T`,
//!
//! whose first-order condition is the Newton equation at the outer iterate
//! `U`. The returned direction is `D = P V`; the iteration stops as soon
//! as the Newton residual `||Hess[D] + g||` drops below `sigma ||g||`, or
//! at the iteration cap, whichever happens first.

use crate::energy::{EnergyModel, GrassmannHessian};
use crate::error::Result;
use crate::geometry::{GrassmannTangent, StiefelPoint};
use crate::kernels::{self, DenseMatrix};

/// Per-call tunables of the inner CG.
#[derive(Debug, Clone)]
pub struct InnerParams {
    /// Inexactness target for this outer iteration.
    pub sigma: f64,
    /// Iteration cap.
    pub cap: usize,
    /// Restart threshold: directions less aligned with the steepest
    /// descent direction than this are replaced by it.
    pub gamma1: f64,
    /// Sufficient-decrease constant of the step acceptance test.
    pub gamma2: f64,
    /// Step backoff factor.
    pub q: f64,
}

/// Outcome of the inner solve.
#[derive(Debug, Clone)]
pub struct InnerSolve {
    /// Direction at the outer iterate (tangent, `U^T D = 0`).
    pub direction: GrassmannTangent,
    pub iterations: usize,
    /// `||Hess[D] + g|| / ||g||` of the returned direction.
    pub residual_ratio: f64,
    /// Whether the `sigma` target was met before the cap.
    pub met_tolerance: bool,
}

/// State of the subproblem at one inner iterate.
struct Eval {
    point: StiefelPoint,
    /// `D = (I - U U^T) V`.
    lifted: DenseMatrix,
    /// `Ebar(V)`.
    value: f64,
    /// Ambient gradient `g + Hess[D]`; its norm is the Newton residual.
    grad_ambient: DenseMatrix,
    /// Frame-manifold gradient `G - V G^T V`.
    grad_stiefel: DenseMatrix,
    grad_stiefel_norm: f64,
    residual_norm: f64,
}

struct Subproblem<'a, M: EnergyModel + ?Sized> {
    outer: &'a StiefelPoint,
    grad: &'a DenseMatrix,
    hessian: &'a GrassmannHessian<'a, M>,
}

impl<'a, M: EnergyModel + ?Sized> Subproblem<'a, M> {
    fn lift(&self, v: &DenseMatrix) -> DenseMatrix {
        v - self.outer.matrix() * (self.outer.matrix().transpose() * v)
    }

    fn eval(&self, point: StiefelPoint) -> Eval {
        let lifted = self.lift(point.matrix());
        let hess_lifted = self.hessian.apply(&lifted);
        let value = self.grad.dot(&lifted) + 0.5 * hess_lifted.dot(&lifted);
        let grad_ambient = self.grad + hess_lifted;
        let v = point.matrix();
        let grad_stiefel = &grad_ambient - v * (grad_ambient.transpose() * v);
        let grad_stiefel_norm = grad_stiefel.norm();
        let residual_norm = grad_ambient.norm();
        Eval {
            point,
            lifted,
            value,
            grad_ambient,
            grad_stiefel,
            grad_stiefel_norm,
            residual_norm,
        }
    }

    /// Curvature of the subproblem along a frame tangent `delta` at `ev`,
    /// including the terms that account for the moving constraint.
    fn curvature(&self, ev: &Eval, delta: &DenseMatrix) -> f64 {
        let v = ev.point.matrix();
        let p_delta = self.lift(delta);
        let main = self.hessian.apply(&p_delta).dot(delta);
        let gd = ev.grad_ambient.transpose() * delta;
        let vd = v.transpose() * delta;
        let corr1 = (&gd * &vd).trace();
        let sym = v.transpose() * &ev.grad_ambient + ev.grad_ambient.transpose() * v;
        let delta_h = delta - v * &vd;
        let corr2 = -0.5 * (sym * (delta.transpose() * delta_h)).trace();
        main + corr1 + corr2
    }
}

/// Runs the inner CG at `u` with gradient `grad` and curvature operator
/// `hessian`, both taken at `u`.
pub fn inner_direction_cg<M: EnergyModel + ?Sized>(
    u: &StiefelPoint,
    grad: &GrassmannTangent,
    hessian: &GrassmannHessian<M>,
    params: &InnerParams,
) -> Result<InnerSolve> {
    let gnorm = grad.norm();
    if gnorm == 0.0 {
        return Ok(InnerSolve {
            direction: GrassmannTangent::zero(u.clone()),
            iterations: 0,
            residual_ratio: 0.0,
            met_tolerance: true,
        });
    }
    let sub = Subproblem {
        outer: u,
        grad: grad.matrix(),
        hessian,
    };

    let mut ev = sub.eval(u.clone());
    // Best direction among the iterates actually produced; the trivial
    // start (zero direction) is never returned once a step succeeds.
    let mut best: Option<(DenseMatrix, f64)> = None;
    let mut delta = -ev.grad_stiefel.clone();
    let mut iterations = 0;
    let mut met = false;

    loop {
        if ev.residual_norm <= params.sigma * gnorm {
            best = Some((ev.lifted.clone(), ev.residual_norm));
            met = true;
            break;
        }
        if iterations >= params.cap || ev.grad_stiefel_norm == 0.0 {
            break;
        }

        let mut inner = delta.dot(&ev.grad_stiefel);
        if inner > 0.0 {
            delta.neg_mut();
            inner = -inner;
        }
        if -inner / (ev.grad_stiefel_norm * ev.grad_stiefel_norm) < params.gamma1 {
            delta = -ev.grad_stiefel.clone();
            inner = -ev.grad_stiefel_norm * ev.grad_stiefel_norm;
        }

        let curvature = sub.curvature(&ev, &delta);
        let mut alpha = if curvature > 0.0 {
            -inner / curvature
        } else {
            1.0 / delta.norm()
        };

        // Step with the QR map (valid for arbitrary frame tangents) and
        // back off until the gamma2 decrease test holds.
        let mut accepted = None;
        for _ in 0..30 {
            let moved = ev.point.matrix() + &delta * alpha;
            let (q, _) = kernels::qr_positive(&moved)?;
            let next = sub.eval(StiefelPoint::new(q)?);
            if next.value - ev.value < params.gamma2 * alpha * inner {
                accepted = Some(next);
                break;
            }
            alpha *= params.q;
        }
        let Some(next) = accepted else {
            break;
        };

        let beta = (next.grad_stiefel_norm * next.grad_stiefel_norm)
            / (ev.grad_stiefel_norm * ev.grad_stiefel_norm);
        let vn = next.point.matrix();
        let projected_prev = &delta - vn * (vn.transpose() * &delta);
        delta = -&next.grad_stiefel + projected_prev * beta;
        ev = next;
        iterations += 1;

        if best.as_ref().is_none_or(|(_, r)| ev.residual_norm < *r) {
            best = Some((ev.lifted.clone(), ev.residual_norm));
        }
    }

    let (lifted, residual) = best.unwrap_or_else(|| {
        (
            DenseMatrix::zeros(u.ambient_dim(), u.frame_width()),
            gnorm,
        )
    });
    Ok(InnerSolve {
        direction: GrassmannTangent::new(u.clone(), lifted)?,
        iterations,
        residual_ratio: residual / gnorm,
        met_tolerance: met,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{grassmann_grad, HessianMode, QuadraticTraceModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(sigma: f64, cap: usize) -> InnerParams {
        InnerParams {
            sigma,
            cap,
            gamma1: 0.1,
            gamma2: 1e-4,
            q: 0.5,
        }
    }

    #[test]
    fn zero_gradient_returns_zero_direction() {
        let a = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            5,
            (1..=5).map(|k| k as f64),
        ));
        let model = QuadraticTraceModel::new(a, 2).unwrap();
        let mut frame = nalgebra::DMatrix::zeros(5, 2);
        frame[(0, 0)] = 1.0;
        frame[(1, 1)] = 1.0;
        let u = StiefelPoint::new(frame).unwrap();
        let g = grassmann_grad(&model, &u).unwrap();
        assert!(g.norm() < 1e-14);
        let hess = GrassmannHessian::new(&model, &u, HessianMode::Exact);
        let out = inner_direction_cg(&u, &g, &hess, &params(0.4, 3)).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.direction.norm() < 1e-14);
    }

    #[test]
    fn returned_direction_is_tangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let model = QuadraticTraceModel::seeded(8, 2, 17).unwrap();
        let u = StiefelPoint::random(&mut rng, 8, 2);
        let g = grassmann_grad(&model, &u).unwrap();
        let hess = GrassmannHessian::new(&model, &u, HessianMode::Exact);
        let out = inner_direction_cg(&u, &g, &hess, &params(0.4, 3)).unwrap();
        let overlap = (u.matrix().transpose() * out.direction.matrix()).norm();
        assert!(overlap <= 1e-10 * out.direction.norm().max(1.0));
    }

    #[test]
    fn residual_certificate_holds_when_met() {
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        // Start near the minimizer so the subproblem is positive definite.
        let model = QuadraticTraceModel::seeded(8, 2, 23).unwrap();
        let (_, vecs) = crate::kernels::sym_eig(model.matrix()).unwrap();
        let mut frame = vecs.columns(0, 2).into_owned();
        let noise = nalgebra::DMatrix::from_fn(8, 2, |_, _| {
            rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal) * 0.05
        });
        frame += noise;
        let u = StiefelPoint::orthonormalize(&frame).unwrap();
        let g = grassmann_grad(&model, &u).unwrap();
        let hess = GrassmannHessian::new(&model, &u, HessianMode::Exact);
        let out = inner_direction_cg(&u, &g, &hess, &params(1e-6, 200)).unwrap();
        assert!(out.met_tolerance, "ratio {:.3e}", out.residual_ratio);
        let residual = hess.apply(out.direction.matrix()) + g.matrix();
        assert!(residual.norm() <= 1e-6 * g.norm());
    }

    #[test]
    fn matches_sylvester_tangent_solve() {
        // Dense Kronecker solve of the Newton equation restricted to the
        // tangent space, via an orthonormal basis of the complement.
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        for seed in [1u64, 2, 3] {
            let model = QuadraticTraceModel::seeded(6, 2, seed).unwrap();
            let (_, vecs) = crate::kernels::sym_eig(model.matrix()).unwrap();
            let mut frame = vecs.columns(0, 2).into_owned();
            let noise = nalgebra::DMatrix::from_fn(6, 2, |_, _| {
                rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal) * 0.08
            });
            frame += noise;
            let u = StiefelPoint::orthonormalize(&frame).unwrap();
            let g = grassmann_grad(&model, &u).unwrap();
            let hess = GrassmannHessian::new(&model, &u, HessianMode::Exact);

            let out = inner_direction_cg(&u, &g, &hess, &params(1e-8, 500)).unwrap();
            assert!(out.met_tolerance);

            // Tangent basis: D = U_perp C, vectorized Sylvester system
            // (I (x) A_hat - Sigma^T (x) I) vec(C) = -vec(U_perp^T G).
            let gram_q = {
                let mut stacked = nalgebra::DMatrix::zeros(6, 6);
                stacked.view_mut((0, 0), (6, 2)).copy_from(u.matrix());
                let fill = nalgebra::DMatrix::from_fn(6, 4, |_, _| {
                    rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal)
                });
                stacked.view_mut((0, 2), (6, 4)).copy_from(&fill);
                let (q, _) = crate::kernels::qr_positive(&stacked).unwrap();
                q.columns(2, 4).into_owned()
            };
            let a_hat = gram_q.transpose() * model.matrix() * &gram_q;
            let sigma = u.matrix().transpose() * model.matrix() * u.matrix();
            let rhs = -(gram_q.transpose() * g.matrix());
            let m = 4;
            let n = 2;
            let mut big = nalgebra::DMatrix::zeros(m * n, m * n);
            for j in 0..n {
                for i in 0..m {
                    let row = j * m + i;
                    for k in 0..m {
                        big[(row, j * m + k)] += a_hat[(i, k)];
                    }
                    for l in 0..n {
                        big[(row, l * m + i)] -= sigma[(l, j)];
                    }
                }
            }
            let rhs_vec =
                nalgebra::DVector::from_fn(m * n, |idx, _| rhs[(idx % m, idx / m)]);
            let c = big.lu().solve(&rhs_vec).unwrap();
            let c_mat = nalgebra::DMatrix::from_fn(m, n, |i, j| c[j * m + i]);
            let d_oracle = gram_q * c_mat;

            let diff = (out.direction.matrix() - &d_oracle).norm();
            assert!(
                diff <= 1e-6 * d_oracle.norm().max(1.0),
                "seed {seed}: diff {diff:.3e}"
            );
        }
    }
}
