//! Outer minimization loops: inexact Newton with Armijo backtracking,
//! inexact Newton with the adaptive step size rule, and a steepest-descent
//! baseline, all sharing one record schema.

use std::str::FromStr;
use std::time::Instant;

use crate::energy::{EnergyModel, GrassmannHessian, HessianMode};
use crate::error::{Error, Result};
use crate::geometry::{GrassmannTangent, StiefelPoint};
use crate::retraction::{retract, RetractionKind};

mod inner_cg;

pub use inner_cg::{inner_direction_cg, InnerParams, InnerSolve};

/// How the per-iteration inexactness target `sigma_n` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaMode {
    /// `sigma_n = sigma` (the practical setting, paired with a small
    /// iteration cap).
    Fixed,
    /// `sigma_n = min(sigma, ||grad||)`, which forces the inner solves to
    /// tighten as the outer iteration converges and yields the quadratic
    /// local rate.
    ResidualScaled,
}

impl FromStr for SigmaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(SigmaMode::Fixed),
            "residual-scaled" => Ok(SigmaMode::ResidualScaled),
            other => Err(Error::Config(format!(
                "unknown sigma mode '{other}' (expected fixed|residual-scaled)"
            ))),
        }
    }
}

impl SigmaMode {
    pub fn name(&self) -> &'static str {
        match self {
            SigmaMode::Fixed => "fixed",
            SigmaMode::ResidualScaled => "residual-scaled",
        }
    }
}

/// Which algorithm drives the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Inexact Newton directions, Armijo backtracking line search.
    NewtonBacktracking,
    /// Inexact Newton directions, adaptive step size (no backtracking).
    NewtonAdaptive,
    /// Steepest descent with curvature-based initial step and Armijo
    /// backtracking.
    GradientDescent,
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newton-bt" => Ok(SolverKind::NewtonBacktracking),
            "newton-adaptive" => Ok(SolverKind::NewtonAdaptive),
            "gradient" => Ok(SolverKind::GradientDescent),
            other => Err(Error::Config(format!(
                "unknown solver '{other}' (expected newton-bt|newton-adaptive|gradient)"
            ))),
        }
    }
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::NewtonBacktracking => "newton-bt",
            SolverKind::NewtonAdaptive => "newton-adaptive",
            SolverKind::GradientDescent => "gradient",
        }
    }
}

/// All tunables of the outer and inner loops.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Gradient-norm stopping tolerance.
    pub epsilon: f64,
    /// Backtracking factor, in (0, 1).
    pub q: f64,
    /// Sufficient-decrease constant; in (0, 1/4) for backtracking solvers
    /// and (0, 1/2) for the adaptive one.
    pub eta: f64,
    /// Inner-CG restart threshold, in (0, 1).
    pub gamma1: f64,
    /// Inner-CG sufficient-decrease constant, in (0, 1).
    pub gamma2: f64,
    /// Inexactness parameter, in (0, 1).
    pub sigma: f64,
    pub sigma_mode: SigmaMode,
    /// Inner iteration cap.
    pub inner_cap: usize,
    /// Floor of the adaptive step.
    pub t_min: f64,
    /// Exponent in the step-cap schedule, in [0, 1].
    pub alpha: f64,
    pub max_outer: usize,
    pub max_backtracks: usize,
    pub retraction: RetractionKind,
    pub hessian_mode: HessianMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-12,
            q: 0.5,
            eta: 1e-4,
            gamma1: 0.1,
            gamma2: 1e-4,
            sigma: 0.4,
            sigma_mode: SigmaMode::Fixed,
            inner_cap: 3,
            t_min: 1e-2,
            alpha: 0.5,
            max_outer: 500,
            max_backtracks: 40,
            retraction: RetractionKind::Qr,
            hessian_mode: HessianMode::Approx,
        }
    }
}

impl SolverConfig {
    /// Checks every range constraint; the admissible `eta` interval
    /// depends on the solver.
    pub fn validate_for(&self, kind: SolverKind) -> Result<()> {
        fn open_unit(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must lie in (0, 1)")))
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon = {} must be positive",
                self.epsilon
            )));
        }
        open_unit("q", self.q)?;
        open_unit("gamma1", self.gamma1)?;
        open_unit("gamma2", self.gamma2)?;
        open_unit("sigma", self.sigma)?;
        let eta_cap = match kind {
            SolverKind::NewtonAdaptive => 0.5,
            _ => 0.25,
        };
        if !(self.eta > 0.0 && self.eta < eta_cap) {
            return Err(Error::Config(format!(
                "eta = {} must lie in (0, {eta_cap}) for solver {}",
                self.eta,
                kind.name()
            )));
        }
        if !(self.t_min > 0.0) {
            return Err(Error::Config("t_min must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha = {} must lie in [0, 1]",
                self.alpha
            )));
        }
        if self.inner_cap == 0 || self.max_outer == 0 {
            return Err(Error::Config(
                "inner_cap and max_outer must be at least 1".into(),
            ));
        }
        self.retraction.validate()
    }
}

/// Telemetry of one accepted outer step (row 0 describes the start point).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub index: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub backtracks: usize,
    pub inner_iters: usize,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIter,
    Stalled,
}

impl Status {
    pub fn name(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIter => "max-iter",
            Status::Stalled => "stalled",
        }
    }
}

impl FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "converged" => Ok(Status::Converged),
            "max-iter" => Ok(Status::MaxIter),
            "stalled" => Ok(Status::Stalled),
            other => Err(Error::Config(format!("unknown status '{other}'"))),
        }
    }
}

/// Per-step acceptance evidence: the quantities of the sufficient-decrease
/// inequality and the feasibility drift of the retained iterate.
#[derive(Debug, Clone)]
pub struct StepCertificate {
    pub index: usize,
    pub grad_dot_dir: f64,
    pub step: f64,
    /// `E(U_{n+1}) - E(U_n)` in cancellation-free form.
    pub energy_delta: f64,
    /// `||U^T U - I||_F` of the retained iterate.
    pub drift: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub final_point: StiefelPoint,
    pub records: Vec<IterationRecord>,
    pub status: Status,
    pub certificates: Vec<StepCertificate>,
    /// Rare-path notes: steepest-descent fallbacks, re-orthonormalizations.
    pub events: Vec<String>,
}

impl SolveResult {
    /// Number of accepted outer steps.
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_energy(&self) -> f64 {
        self.records.last().map(|r| r.energy).unwrap_or(f64::NAN)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.records.last().map(|r| r.grad_norm).unwrap_or(f64::NAN)
    }
}

/// Curvature-based initial step `-<g, D> / Hess[D, D]`.
///
/// Equals 1 when `D` solves the Newton equation exactly; fails when the
/// curvature term vanishes (callers fall back to the step-cap schedule).
pub fn hessian_step<M: EnergyModel + ?Sized>(
    model: &M,
    u: &StiefelPoint,
    d: &GrassmannTangent,
    mode: HessianMode,
) -> Result<f64> {
    let g = crate::energy::grassmann_grad(model, u)?;
    let hess = GrassmannHessian::new(model, u, mode);
    let curvature = hess.quad_form(d.matrix(), d.matrix());
    hessian_step_from(g.matrix().dot(d.matrix()), curvature)
}

fn hessian_step_from(grad_dot_dir: f64, curvature: f64) -> Result<f64> {
    if curvature == 0.0 || !curvature.is_finite() {
        return Err(Error::DegenerateCurvature);
    }
    Ok(-grad_dot_dir / curvature)
}

/// Step cap `theta = (-eta <g, D> / ||D||)^{1/(1+alpha)}`.
pub fn theta_schedule<M: EnergyModel + ?Sized>(
    model: &M,
    u: &StiefelPoint,
    d: &GrassmannTangent,
    eta: f64,
    alpha: f64,
) -> Result<f64> {
    let g = crate::energy::grassmann_grad(model, u)?;
    theta_schedule_from(g.matrix().dot(d.matrix()), d.norm(), eta, alpha)
}

fn theta_schedule_from(grad_dot_dir: f64, dir_norm: f64, eta: f64, alpha: f64) -> Result<f64> {
    if grad_dot_dir >= 0.0 {
        return Err(Error::NonDescent {
            inner_product: grad_dot_dir,
        });
    }
    Ok((-eta * grad_dot_dir / dir_norm).powf(1.0 / (1.0 + alpha)))
}

/// Adaptive step size: starts from `clamp(t_init)`, accepts it when the
/// second-order decrease estimator stays above `eta`, and otherwise jumps
/// to the one-dimensional model minimizer (capped by `theta / ||D||`).
pub fn adaptive_step<M: EnergyModel + ?Sized>(
    model: &M,
    u: &StiefelPoint,
    d: &GrassmannTangent,
    t_init: f64,
    t_min: f64,
    eta: f64,
    theta: f64,
    mode: HessianMode,
) -> Result<f64> {
    let g = crate::energy::grassmann_grad(model, u)?;
    let hess = GrassmannHessian::new(model, u, mode);
    let grad_dot_dir = g.matrix().dot(d.matrix());
    let curvature = hess.quad_form(d.matrix(), d.matrix());
    adaptive_step_from(grad_dot_dir, curvature, d.norm(), t_init, t_min, eta, theta)
}

fn adaptive_step_from(
    grad_dot_dir: f64,
    curvature: f64,
    dir_norm: f64,
    t_init: f64,
    t_min: f64,
    eta: f64,
    theta: f64,
) -> Result<f64> {
    adaptive_step_detail(grad_dot_dir, curvature, dir_norm, t_init, t_min, eta, theta)
        .map(|d| d.step)
}

struct AdaptiveDetail {
    step: f64,
    /// Decrease-quality estimator at the clamped step.
    zeta: f64,
    /// The step-length cap `theta / ||D||` was the binding constraint.
    cap_bound: bool,
    /// The estimator fell below `eta` and the step jumped to the model
    /// minimizer.
    improved: bool,
}

fn adaptive_step_detail(
    grad_dot_dir: f64,
    curvature: f64,
    dir_norm: f64,
    t_init: f64,
    t_min: f64,
    eta: f64,
    theta: f64,
) -> Result<AdaptiveDetail> {
    if grad_dot_dir >= 0.0 {
        return Err(Error::NonDescent {
            inner_product: grad_dot_dir,
        });
    }
    let cap = theta / dir_norm;
    let mut t = t_init.max(t_min).min(cap);
    let cap_bound = t == cap && cap < t_init.max(t_min);
    let zeta = (grad_dot_dir + 0.5 * t * curvature) / grad_dot_dir;
    let improved = zeta < eta;
    if improved {
        t = if curvature > 0.0 {
            (-grad_dot_dir / curvature).min(cap)
        } else {
            cap
        };
    }
    Ok(AdaptiveDetail {
        step: t,
        zeta,
        cap_bound,
        improved,
    })
}

/// Inexact Newton with Armijo backtracking.
pub fn newton_backtracking<M: EnergyModel + ?Sized>(
    model: &M,
    u0: &StiefelPoint,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    run_outer(model, u0, cfg, SolverKind::NewtonBacktracking)
}

/// Inexact Newton with the adaptive step size rule.
pub fn newton_adaptive<M: EnergyModel + ?Sized>(
    model: &M,
    u0: &StiefelPoint,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    run_outer(model, u0, cfg, SolverKind::NewtonAdaptive)
}

/// Steepest descent baseline with the same telemetry.
pub fn gradient_baseline<M: EnergyModel + ?Sized>(
    model: &M,
    u0: &StiefelPoint,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    run_outer(model, u0, cfg, SolverKind::GradientDescent)
}

/// Dispatch by kind.
pub fn solve<M: EnergyModel + ?Sized>(
    kind: SolverKind,
    model: &M,
    u0: &StiefelPoint,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    run_outer(model, u0, cfg, kind)
}

/// Feasibility drift above which the iterate is re-orthonormalized.
const REORTH_THRESHOLD: f64 = 1e-8;
/// Relative energy decrease below which an iteration counts as stalled.
const STALL_DECREASE: f64 = 1e-16;
/// Consecutive stalled iterations before giving up.
const STALL_LIMIT: usize = 50;

fn run_outer<M: EnergyModel + ?Sized>(
    model: &M,
    u0: &StiefelPoint,
    cfg: &SolverConfig,
    kind: SolverKind,
) -> Result<SolveResult> {
    cfg.validate_for(kind)?;
    let start = Instant::now();
    let mut events = Vec::new();
    let mut certificates = Vec::new();

    let mut u = u0.clone();
    let mut energy = model.value(u.matrix());
    let mut euclid_grad = model.euclid_grad(u.matrix());
    let mut grad = project_grad(&u, &euclid_grad)?;
    let mut records = vec![IterationRecord {
        index: 0,
        energy,
        grad_norm: grad.norm(),
        step: 0.0,
        backtracks: 0,
        inner_iters: 0,
        elapsed_s: start.elapsed().as_secs_f64(),
    }];

    let mut status = Status::MaxIter;
    let mut stall_count = 0usize;
    let mut best_grad_norm = f64::INFINITY;
    // Multiplier on the step-length cap of the adaptive rule. The printed
    // cap formula is a conservative surrogate for the largest radius on
    // which the quadratic model is trustworthy; the multiplier recovers
    // that radius empirically, growing only while the cap binds with the
    // model still accurate at the capped step and shrinking whenever the
    // estimator flags an overshoot.
    let mut trust = 1.0_f64;
    for index in 1..=cfg.max_outer {
        let grad_norm = grad.norm();
        if grad_norm <= cfg.epsilon {
            status = Status::Converged;
            break;
        }

        let hess = GrassmannHessian::with_gradient(model, &u, &euclid_grad, cfg.hessian_mode);

        let (mut direction, inner_iters) = match kind {
            SolverKind::GradientDescent => (grad.scaled(-1.0), 0),
            _ => {
                let sigma_n = match cfg.sigma_mode {
                    SigmaMode::Fixed => cfg.sigma,
                    SigmaMode::ResidualScaled => cfg.sigma.min(grad_norm),
                };
                let inner = inner_direction_cg(
                    &u,
                    &grad,
                    &hess,
                    &InnerParams {
                        sigma: sigma_n,
                        cap: cfg.inner_cap,
                        gamma1: cfg.gamma1,
                        gamma2: cfg.gamma2,
                        q: cfg.q,
                    },
                )?;
                (inner.direction, inner.iterations)
            }
        };

        let mut grad_dot_dir = grad.matrix().dot(direction.matrix());
        if !grad_dot_dir.is_finite()
            || grad_dot_dir >= 0.0
            || direction.norm() <= 1e-14 * grad_norm.max(1.0)
        {
            events.push(format!(
                "iteration {index}: inner direction was not a usable descent direction \
                 (<g, D> = {grad_dot_dir:.3e}); using steepest descent"
            ));
            direction = grad.scaled(-1.0);
            grad_dot_dir = -grad_norm * grad_norm;
        }
        let dir_norm = direction.norm();
        let curvature = hess.quad_form(direction.matrix(), direction.matrix());
        let theta = theta_schedule_from(grad_dot_dir, dir_norm, cfg.eta, cfg.alpha)?;
        let t_init = match hessian_step_from(grad_dot_dir, curvature) {
            Ok(t) if t > 0.0 => t,
            _ => {
                events.push(format!(
                    "iteration {index}: non-positive curvature {curvature:.3e}; \
                     falling back to the step cap"
                ));
                theta / dir_norm
            }
        };

        let step_delta =
            |candidate: &StiefelPoint| model.value_delta(u.matrix(), candidate.matrix());

        let (t_n, backtracks, next, delta) = match kind {
            SolverKind::NewtonAdaptive => {
                let detail = adaptive_step_detail(
                    grad_dot_dir,
                    curvature,
                    dir_norm,
                    t_init,
                    cfg.t_min,
                    cfg.eta,
                    theta * trust,
                )?;
                if detail.improved {
                    trust = (trust * 0.25).max(1.0);
                } else if detail.cap_bound && detail.zeta >= 0.5 {
                    let factor = if detail.zeta >= 0.75 { 4.0 } else { 2.0 };
                    trust = (trust * factor).min(1e12);
                }
                let next = retract(&cfg.retraction, &u, &direction, detail.step)?;
                let delta = step_delta(&next);
                (detail.step, 0, next, delta)
            }
            _ => {
                let mut accepted = None;
                for m in 0..=cfg.max_backtracks {
                    let t = t_init * cfg.q.powi(m as i32);
                    let candidate = retract(&cfg.retraction, &u, &direction, t)?;
                    let delta = step_delta(&candidate);
                    if delta <= cfg.eta * t * grad_dot_dir {
                        accepted = Some((t, m, candidate, delta));
                        break;
                    }
                }
                match accepted {
                    Some(step) => step,
                    None => {
                        events.push(format!(
                            "iteration {index}: Armijo failed after {} backtracks",
                            cfg.max_backtracks
                        ));
                        status = Status::Stalled;
                        break;
                    }
                }
            }
        };

        let mut next = next;
        if next.drift() > REORTH_THRESHOLD {
            events.push(format!(
                "iteration {index}: feasibility drift {:.3e}; re-orthonormalized",
                next.drift()
            ));
            next = StiefelPoint::orthonormalize(next.matrix())?;
        }
        certificates.push(StepCertificate {
            index,
            grad_dot_dir,
            step: t_n,
            energy_delta: delta,
            drift: next.drift(),
        });

        let energy_progress = -delta >= STALL_DECREASE * energy.abs().max(1.0);

        u = next;
        energy += delta;
        euclid_grad = model.euclid_grad(u.matrix());
        grad = project_grad(&u, &euclid_grad)?;

        // A run is only stalled when neither the energy nor the gradient
        // norm makes progress; near the energy's floating-point floor the
        // gradient is the remaining progress signal.
        let grad_progress = grad.norm() < best_grad_norm * (1.0 - 1e-6);
        best_grad_norm = best_grad_norm.min(grad.norm());
        if energy_progress || grad_progress {
            stall_count = 0;
        } else {
            stall_count += 1;
        }
        records.push(IterationRecord {
            index,
            energy,
            grad_norm: grad.norm(),
            step: t_n,
            backtracks,
            inner_iters,
            elapsed_s: start.elapsed().as_secs_f64(),
        });

        if stall_count >= STALL_LIMIT {
            status = Status::Stalled;
            break;
        }
        if grad.norm() <= cfg.epsilon {
            status = Status::Converged;
            break;
        }
    }

    Ok(SolveResult {
        final_point: u,
        records,
        status,
        certificates,
        events,
    })
}

fn project_grad(u: &StiefelPoint, euclid_grad: &crate::kernels::DenseMatrix) -> Result<GrassmannTangent> {
    let sigma = u.matrix().transpose() * euclid_grad;
    GrassmannTangent::new(u.clone(), euclid_grad - u.matrix() * sigma)
}
