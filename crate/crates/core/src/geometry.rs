//! Quotient geometry of orthonormal frames: tangent projection, closed-form
//! geodesics, parallel transport, the subspace logarithm and the two
//! subspace distances.
//!
//! Points are `n_g x n` matrices with orthonormal columns; two frames are
//! identified when they span the same subspace, so tangent directions `D`
//! satisfy `U^T D = 0`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{self, DenseMatrix, DenseVector, SvdFactors};

/// Frobenius tolerance for the orthonormality constraint `U^T U = I`.
pub const STIEFEL_TOL: f64 = 1e-12;
/// Tolerance for tangency `U^T D = 0`, relative to `max(1, ||D||_F)`.
pub const TANGENT_TOL: f64 = 1e-10;
/// Principal angles closer than this to pi/2 make the logarithm ill-posed.
pub const CUT_LOCUS_TOL: f64 = 1e-8;

/// An orthonormal frame: `n_g x n` matrix with `U^T U = I_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    matrix: DenseMatrix,
}

impl StiefelPoint {
    /// Wraps a matrix after checking the orthonormality invariant.
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        let n = matrix.ncols();
        if matrix.nrows() < n || n == 0 {
            return Err(Error::ShapeMismatch {
                expected: "rows >= cols >= 1".into(),
                got: format!("{}x{}", matrix.nrows(), n),
            });
        }
        let drift = orthonormality_drift(&matrix);
        if drift > STIEFEL_TOL * (n as f64).sqrt() {
            return Err(Error::InvalidInput(format!(
                "columns are not orthonormal (||U^T U - I||_F = {drift:.3e})"
            )));
        }
        Ok(Self { matrix })
    }

    /// Orthonormalizes an arbitrary full-rank matrix with sign-fixed QR.
    pub fn orthonormalize(matrix: &DenseMatrix) -> Result<Self> {
        let (q, _) = kernels::qr_positive(matrix)?;
        Ok(Self { matrix: q })
    }

    /// Seeded Gaussian frame, orthonormalized by QR.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Self {
        let g = DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(rand_distr::StandardNormal));
        Self::orthonormalize(&g).expect("Gaussian matrix is full rank almost surely")
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn ambient_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn frame_width(&self) -> usize {
        self.matrix.ncols()
    }

    /// `||U^T U - I||_F` of the wrapped matrix.
    pub fn drift(&self) -> f64 {
        orthonormality_drift(&self.matrix)
    }
}

pub(crate) fn orthonormality_drift(m: &DenseMatrix) -> f64 {
    let gram = m.transpose() * m;
    (gram - DenseMatrix::identity(m.ncols(), m.ncols())).norm()
}

/// A horizontal tangent direction `D` at a frame `U`, with `U^T D = 0`.
#[derive(Debug, Clone)]
pub struct GrassmannTangent {
    base: StiefelPoint,
    matrix: DenseMatrix,
}

impl GrassmannTangent {
    /// Wraps a matrix after checking tangency against `base`.
    pub fn new(base: StiefelPoint, matrix: DenseMatrix) -> Result<Self> {
        if matrix.shape() != base.matrix.shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", base.ambient_dim(), base.frame_width()),
                got: format!("{}x{}", matrix.nrows(), matrix.ncols()),
            });
        }
        let overlap = (base.matrix.transpose() * &matrix).norm();
        if overlap > TANGENT_TOL * matrix.norm().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "matrix is not tangent at base (||U^T D||_F = {overlap:.3e})"
            )));
        }
        Ok(Self { base, matrix })
    }

    /// Zero direction at `base`.
    pub fn zero(base: StiefelPoint) -> Self {
        let matrix = DenseMatrix::zeros(base.ambient_dim(), base.frame_width());
        Self { base, matrix }
    }

    /// Seeded Gaussian direction projected to the tangent space at `base`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, base: &StiefelPoint) -> Self {
        let g = DenseMatrix::from_fn(base.ambient_dim(), base.frame_width(), |_, _| {
            rng.sample(rand_distr::StandardNormal)
        });
        project_tangent(base, &g).expect("shapes match by construction")
    }

    pub fn base(&self) -> &StiefelPoint {
        &self.base
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// Rescaled copy (same base).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            base: self.base.clone(),
            matrix: &self.matrix * factor,
        }
    }
}

fn check_base(u: &StiefelPoint, d: &GrassmannTangent) -> Result<()> {
    if d.base.matrix == u.matrix {
        Ok(())
    } else {
        Err(Error::BaseMismatch)
    }
}

/// Projects an ambient matrix onto the horizontal space at `U`:
/// `(I - U U^T) Y`.
pub fn project_tangent(u: &StiefelPoint, y: &DenseMatrix) -> Result<GrassmannTangent> {
    if y.shape() != u.matrix.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", u.ambient_dim(), u.frame_width()),
            got: format!("{}x{}", y.nrows(), y.ncols()),
        });
    }
    let projected = y - &u.matrix * (u.matrix.transpose() * y);
    Ok(GrassmannTangent {
        base: u.clone(),
        matrix: projected,
    })
}

/// Geodesic starting at `U` with velocity `D`, evaluated at parameter `t`.
///
/// With the thin SVD `D = A S B^T` the curve is
/// `U B cos(S t) B^T + A sin(S t) B^T`.
pub fn geodesic(u: &StiefelPoint, d: &GrassmannTangent, t: f64) -> Result<StiefelPoint> {
    check_base(u, d)?;
    if !t.is_finite() {
        return Err(Error::InvalidInput("step parameter must be finite".into()));
    }
    let f = kernels::thin_svd(&d.matrix)?;
    Ok(geodesic_from_factors(u, &f, t))
}

fn geodesic_from_factors(u: &StiefelPoint, f: &SvdFactors, t: f64) -> StiefelPoint {
    let k = f.singulars.len();
    let cos = DenseVector::from_fn(k, |i, _| (f.singulars[i] * t).cos());
    let sin = DenseVector::from_fn(k, |i, _| (f.singulars[i] * t).sin());
    // U * B cos(St) B^T + A sin(St) B^T
    let mut b_cos = f.right.clone();
    let mut a_sin = f.left.clone();
    for j in 0..k {
        b_cos.column_mut(j).scale_mut(cos[j]);
        a_sin.column_mut(j).scale_mut(sin[j]);
    }
    let matrix = &u.matrix * (b_cos * f.right.transpose()) + a_sin * f.right.transpose();
    StiefelPoint { matrix }
}

/// Parallel transport of `X` along the geodesic `t -> exp_U(t D)`.
///
/// The transported vector is tangent at the geodesic endpoint; transport is
/// an isometry of the horizontal spaces.
pub fn parallel_transport(
    u: &StiefelPoint,
    d: &GrassmannTangent,
    t: f64,
    x: &GrassmannTangent,
) -> Result<GrassmannTangent> {
    check_base(u, d)?;
    check_base(u, x)?;
    let f = kernels::thin_svd(&d.matrix)?;
    let endpoint = geodesic_from_factors(u, &f, t);
    let moved = transport_operator(u, &f, t, &x.matrix, false);
    Ok(GrassmannTangent {
        base: endpoint,
        matrix: moved,
    })
}

/// Inverse of [`parallel_transport`]: pulls a vector tangent at
/// `exp_U(t D)` back to the tangent space at `U`.
pub fn inverse_transport(
    u: &StiefelPoint,
    d: &GrassmannTangent,
    t: f64,
    y: &DenseMatrix,
) -> Result<GrassmannTangent> {
    check_base(u, d)?;
    let f = kernels::thin_svd(&d.matrix)?;
    let pulled = transport_operator(u, &f, t, y, true);
    project_tangent(u, &pulled)
}

/// Applies `M(t) = -U B sin(St) A^T + A cos(St) A^T + (I - A A^T)` (or its
/// transpose) without forming any `n_g x n_g` matrix.
fn transport_operator(
    u: &StiefelPoint,
    f: &SvdFactors,
    t: f64,
    x: &DenseMatrix,
    transpose: bool,
) -> DenseMatrix {
    let k = f.singulars.len();
    let cos_m1 = DenseVector::from_fn(k, |i, _| (f.singulars[i] * t).cos() - 1.0);
    let sin = DenseVector::from_fn(k, |i, _| (f.singulars[i] * t).sin());
    if !transpose {
        // X + A (cos - 1)(A^T X) - U B sin (A^T X)
        let ax = f.left.transpose() * x;
        let mut cos_ax = ax.clone();
        let mut sin_ax = ax;
        for i in 0..k {
            cos_ax.row_mut(i).scale_mut(cos_m1[i]);
            sin_ax.row_mut(i).scale_mut(sin[i]);
        }
        x + &f.left * cos_ax - &u.matrix * (&f.right * sin_ax)
    } else {
        // X + A (cos - 1)(A^T X) - A sin B^T (U^T X)
        let ax = f.left.transpose() * x;
        let ux = u.matrix.transpose() * x;
        let mut cos_ax = ax;
        for i in 0..k {
            cos_ax.row_mut(i).scale_mut(cos_m1[i]);
        }
        let mut sin_bux = f.right.transpose() * ux;
        for i in 0..k {
            sin_bux.row_mut(i).scale_mut(sin[i]);
        }
        x + &f.left * cos_ax - &f.left * sin_bux
    }
}

/// Principal angles between the subspaces spanned by two frames, together
/// with the factorizations they came from.
///
/// `cos_svd` factors `U^T V`; (`perp_left`, `perp_sines`, `perp_right`)
/// factor `V - U (U^T V)` with the same right basis, so `perp_left` columns
/// paired with zero sines are identically zero rather than padded.
#[derive(Debug, Clone)]
pub struct PrincipalAngles {
    /// Ascending, each in `[0, pi/2]`.
    pub angles: DenseVector,
    pub cos_svd: SvdFactors,
    pub perp_left: DenseMatrix,
    pub perp_sines: DenseVector,
    pub perp_right: DenseMatrix,
}

/// Computes principal angles via the cosine SVD of `U^T V` combined with
/// the sine factorization of `V - U(U^T V)`; small angles come from the
/// sine route so they stay accurate far below `sqrt(eps)`.
pub fn principal_angles(u: &StiefelPoint, v: &StiefelPoint) -> Result<PrincipalAngles> {
    if u.matrix.shape() != v.matrix.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", u.ambient_dim(), u.frame_width()),
            got: format!("{}x{}", v.ambient_dim(), v.frame_width()),
        });
    }
    let n = u.frame_width();
    let m = u.matrix.transpose() * &v.matrix;
    let cos_svd = kernels::thin_svd(&m)?;
    let perp = &v.matrix - &u.matrix * &m;
    // Columns of (V - U M) B are mutually orthogonal with norms sin(theta_i).
    let c = perp * &cos_svd.right;
    let mut perp_left = DenseMatrix::zeros(u.ambient_dim(), n);
    let mut perp_sines = DenseVector::zeros(n);
    let mut angles = DenseVector::zeros(n);
    for i in 0..n {
        let sine = c.column(i).norm();
        let cosine = cos_svd.singulars[i].clamp(0.0, 1.0);
        perp_sines[i] = sine;
        if sine > 0.0 {
            perp_left.set_column(i, &(c.column(i) / sine));
        }
        angles[i] = if sine < std::f64::consts::FRAC_1_SQRT_2 {
            sine.clamp(0.0, 1.0).asin()
        } else {
            cosine.acos()
        };
    }
    Ok(PrincipalAngles {
        angles,
        cos_svd,
        perp_left,
        perp_sines,
        perp_right: DenseMatrix::zeros(0, 0),
    }
    .with_shared_right())
}

impl PrincipalAngles {
    fn with_shared_right(mut self) -> Self {
        self.perp_right = self.cos_svd.right.clone();
        self
    }
}

/// Subspace logarithm: the direction `D` with `exp_U(D)` spanning the same
/// subspace as `V`, plus the principal angles it was built from.
///
/// Fails when any principal angle is within [`CUT_LOCUS_TOL`] of `pi/2`,
/// where the logarithm stops being unique.
pub fn grassmann_log(
    u: &StiefelPoint,
    v: &StiefelPoint,
) -> Result<(GrassmannTangent, PrincipalAngles)> {
    let pa = principal_angles(u, v)?;
    let n = u.frame_width();
    for i in 0..n {
        let angle = pa.angles[i];
        if angle > std::f64::consts::FRAC_PI_2 - CUT_LOCUS_TOL {
            return Err(Error::CutLocus {
                index: i,
                angle,
                tol: CUT_LOCUS_TOL,
            });
        }
    }
    // D = A2 * Theta * A^T with A the left cosine factor.
    let mut scaled = pa.perp_left.clone();
    for i in 0..n {
        scaled.column_mut(i).scale_mut(pa.angles[i]);
    }
    let d = scaled * pa.cos_svd.left.transpose();
    let tangent = GrassmannTangent {
        base: u.clone(),
        matrix: d,
    };
    Ok((tangent, pa))
}

/// Chordal subspace distance `min_P ||U - V P||_F = ||2 sin(Theta/2)||_F`.
pub fn dist_f(u: &StiefelPoint, v: &StiefelPoint) -> Result<f64> {
    let pa = principal_angles(u, v)?;
    Ok(pa
        .angles
        .iter()
        .map(|th| {
            let s = 2.0 * (th / 2.0).sin();
            s * s
        })
        .sum::<f64>()
        .sqrt())
}

/// Geodesic (arc-length) subspace distance `||Theta||_F`.
pub fn dist_geo(u: &StiefelPoint, v: &StiefelPoint) -> Result<f64> {
    let pa = principal_angles(u, v)?;
    Ok(pa.angles.iter().map(|th| th * th).sum::<f64>().sqrt())
}
