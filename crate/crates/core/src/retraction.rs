//! Orthogonality-preserving update strategies ("retractions"): QR, polar
//! (PD), the Cayley-type WY map, a family of resolvent maps built from
//! skew generators (including the (2,2) and (3,3) Pade approximants of the
//! exponential), and the exact geodesic.
//!
//! All of them agree with `U + t D` to first order and keep the iterate on
//! the manifold; they differ from each other by `O(t^2)` and in energy by
//! `O(t^3)`.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{self, GrassmannTangent, StiefelPoint};
use crate::kernels::{self, DenseMatrix};

/// Selects one member of the retraction family.
#[derive(Debug, Clone, PartialEq)]
pub enum RetractionKind {
    /// Sign-fixed QR factorization of `U + t D`.
    Qr,
    /// Polar factor of `U + t D`.
    Pd,
    /// Cayley map `(I - (t/2) W)^{-1} (I + (t/2) W) U`.
    Wy,
    /// Resolvent map from the `(k,k)` Pade approximant of `exp(tW)`,
    /// `k` in `{2, 3}`.
    GaPade(u8),
    /// Resolvent map with `P(t, W) = t^2 sum_i c_i (tW)^i W^2` for
    /// user-supplied coefficients `c_0..c_k`.
    GaCustom(Vec<f64>),
    /// Exact geodesic.
    Geodesic,
}

impl RetractionKind {
    pub fn name(&self) -> String {
        match self {
            RetractionKind::Qr => "qr".into(),
            RetractionKind::Pd => "pd".into(),
            RetractionKind::Wy => "wy".into(),
            RetractionKind::GaPade(k) => format!("ga-pade{k}"),
            RetractionKind::GaCustom(_) => "ga-custom".into(),
            RetractionKind::Geodesic => "geodesic".into(),
        }
    }

    /// Validates the variant payload (Pade order, finite coefficients).
    pub fn validate(&self) -> Result<()> {
        match self {
            RetractionKind::GaPade(k) if !matches!(k, 2 | 3) => Err(Error::Config(format!(
                "ga-pade order must be 2 or 3, got {k}"
            ))),
            RetractionKind::GaCustom(c) if c.iter().any(|x| !x.is_finite()) => {
                Err(Error::Config("ga-custom coefficients must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for RetractionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qr" => Ok(RetractionKind::Qr),
            "pd" => Ok(RetractionKind::Pd),
            "wy" => Ok(RetractionKind::Wy),
            "ga-pade2" => Ok(RetractionKind::GaPade(2)),
            "ga-pade3" => Ok(RetractionKind::GaPade(3)),
            "geodesic" => Ok(RetractionKind::Geodesic),
            other => Err(Error::Config(format!(
                "unknown retraction '{other}' (expected qr|pd|wy|ga-pade2|ga-pade3|geodesic)"
            ))),
        }
    }
}

/// The skew generator `W = D U^T - U D^T` of a tangent direction, kept in
/// factored form; `W U = D` and `||W||_F = sqrt(2) ||D||_F`.
pub struct SkewGenerator<'a> {
    u: &'a StiefelPoint,
    d: &'a GrassmannTangent,
}

impl<'a> SkewGenerator<'a> {
    pub fn new(u: &'a StiefelPoint, d: &'a GrassmannTangent) -> Result<Self> {
        if d.base().matrix() != u.matrix() {
            return Err(Error::BaseMismatch);
        }
        Ok(Self { u, d })
    }

    /// Applies `W` to an `n_g x m` block without forming `W`.
    pub fn apply(&self, x: &DenseMatrix) -> DenseMatrix {
        self.d.matrix() * (self.u.matrix().transpose() * x)
            - self.u.matrix() * (self.d.matrix().transpose() * x)
    }

    pub fn fro_norm(&self) -> f64 {
        2f64.sqrt() * self.d.norm()
    }

    /// Dense `n_g x n_g` form; test and oracle use only.
    pub fn dense(&self) -> DenseMatrix {
        self.d.matrix() * self.u.matrix().transpose()
            - self.u.matrix() * self.d.matrix().transpose()
    }
}

/// The `P(t, W)` block of a resolvent retraction.
#[derive(Debug, Clone)]
pub enum GaPolynomial {
    /// `P = 0`: the map degenerates to the WY strategy.
    Zero,
    /// `P = t^2 sum_i c_i (tW)^i W^2`; commutes with `W` and `P^T` because
    /// it is a polynomial in `W`.
    MonomialCoeffs(Vec<f64>),
    /// `P = exp(tW/2) - I - tW/2`: the map reproduces the geodesic.
    ExpRemainder,
}

/// Applies any retraction of the family at `(U, D, t)`.
pub fn retract(
    kind: &RetractionKind,
    u: &StiefelPoint,
    d: &GrassmannTangent,
    t: f64,
) -> Result<StiefelPoint> {
    kind.validate()?;
    if d.base().matrix() != u.matrix() {
        return Err(Error::BaseMismatch);
    }
    if t == 0.0 {
        return Ok(u.clone());
    }
    match kind {
        RetractionKind::Qr => retract_qr(u, d, t),
        RetractionKind::Pd => retract_pd(u, d, t),
        RetractionKind::Wy => retract_wy(u, d, t),
        RetractionKind::GaPade(2) => ga_resolvent(u, d, t, &GaPolynomial::MonomialCoeffs(vec![1.0 / 12.0])),
        RetractionKind::GaPade(3) => ga_resolvent(
            u,
            d,
            t,
            &GaPolynomial::MonomialCoeffs(vec![1.0 / 10.0, 1.0 / 120.0]),
        ),
        RetractionKind::GaPade(_) => unreachable!("validated above"),
        RetractionKind::GaCustom(c) => ga_resolvent(u, d, t, &GaPolynomial::MonomialCoeffs(c.clone())),
        RetractionKind::Geodesic => geometry::geodesic(u, d, t),
    }
}

fn retract_qr(u: &StiefelPoint, d: &GrassmannTangent, t: f64) -> Result<StiefelPoint> {
    let moved = u.matrix() + d.matrix() * t;
    let (q, _) = kernels::qr_positive(&moved)?;
    StiefelPoint::new(q)
}

fn retract_pd(u: &StiefelPoint, d: &GrassmannTangent, t: f64) -> Result<StiefelPoint> {
    let n = u.frame_width();
    let moved = u.matrix() + d.matrix() * t;
    // (U + tD)(I + t^2 D^T D)^{-1/2} through the eigenbasis of D^T D.
    let gram = d.matrix().transpose() * d.matrix();
    let (mu, v) = kernels::sym_eig(&gram)?;
    let mut scaled = v.clone();
    for j in 0..n {
        scaled
            .column_mut(j)
            .scale_mut(1.0 / (1.0 + t * t * mu[j].max(0.0)).sqrt());
    }
    let inv_sqrt = scaled * v.transpose();
    StiefelPoint::new(moved * inv_sqrt)
}

fn retract_wy(u: &StiefelPoint, d: &GrassmannTangent, t: f64) -> Result<StiefelPoint> {
    let n = u.frame_width();
    // U + tD K - (t^2/2) U K (D^T D), with K = (I + (t^2/4) D^T D)^{-1}.
    let gram = d.matrix().transpose() * d.matrix();
    let cap = DenseMatrix::identity(n, n) + &gram * (t * t / 4.0);
    let k = cap
        .lu()
        .solve(&DenseMatrix::identity(n, n))
        .ok_or(Error::StepTooLarge { t })?;
    let matrix =
        u.matrix() + d.matrix() * &k * t - u.matrix() * (&k * &gram) * (t * t / 2.0);
    StiefelPoint::new(matrix)
}

/// Evaluates the resolvent map
/// `(I - (t/2) W + P^T)^{-1} (I + (t/2) W + P) U`
/// through a reduced system on `span[U, D]`, never forming an
/// `n_g x n_g` matrix.
pub fn ga_resolvent(
    u: &StiefelPoint,
    d: &GrassmannTangent,
    t: f64,
    p_spec: &GaPolynomial,
) -> Result<StiefelPoint> {
    if d.base().matrix() != u.matrix() {
        return Err(Error::BaseMismatch);
    }
    let n = u.frame_width();
    let w = SkewGenerator::new(u, d)?;

    // Orthonormal basis Q of span[U, D]; W vanishes on its complement and
    // maps it into itself, so the resolvent acts as the identity outside.
    let f = kernels::thin_svd(d.matrix())?;
    let tol = f.singulars[0] * 1e-14;
    let rank = f.singulars.iter().take_while(|&&s| s > tol).count();
    let mut stacked = DenseMatrix::zeros(u.ambient_dim(), n + rank);
    stacked.view_mut((0, 0), (u.ambient_dim(), n)).copy_from(u.matrix());
    for j in 0..rank {
        stacked.set_column(n + j, &f.left.column(j));
    }
    let (q, _) = kernels::qr_positive(&stacked)?;
    let m = q.ncols();

    // Reduced skew generator; re-skew to remove factorization roundoff.
    let wq = w.apply(&q);
    let w_red = q.transpose() * wq;
    let z = (&w_red - w_red.transpose()) * (0.5 * t);

    let p_red = match p_spec {
        GaPolynomial::Zero => DenseMatrix::zeros(m, m),
        GaPolynomial::MonomialCoeffs(coeffs) => {
            if coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config(
                    "ga polynomial coefficients must be finite".into(),
                ));
            }
            // P = sum_i c_i z^{i+2} with z = tW.
            let mut acc = DenseMatrix::zeros(m, m);
            let mut power = &z * &z;
            for &c in coeffs {
                acc += &power * c;
                power = &power * &z;
            }
            acc
        }
        GaPolynomial::ExpRemainder => {
            kernels::matrix_exp(&(&z * 0.5))? - DenseMatrix::identity(m, m) - &z * 0.5
        }
    };

    let num = DenseMatrix::identity(m, m) + &z * 0.5 + &p_red;
    let den = DenseMatrix::identity(m, m) - &z * 0.5 + p_red.transpose();
    let rhs = num * (q.transpose() * u.matrix());
    let y = den.lu().solve(&rhs).ok_or(Error::StepTooLarge { t })?;
    StiefelPoint::new(q * y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_setup() -> (StiefelPoint, GrassmannTangent) {
        let u = StiefelPoint::new(DenseMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).unwrap();
        let d = GrassmannTangent::new(
            u.clone(),
            DenseMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]),
        )
        .unwrap();
        (u, d)
    }

    fn all_kinds() -> Vec<RetractionKind> {
        vec![
            RetractionKind::Qr,
            RetractionKind::Pd,
            RetractionKind::Wy,
            RetractionKind::GaPade(2),
            RetractionKind::GaPade(3),
            RetractionKind::Geodesic,
        ]
    }

    #[test]
    fn zero_step_returns_base_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let u = StiefelPoint::random(&mut rng, 7, 3);
        let d = GrassmannTangent::random(&mut rng, &u);
        for kind in all_kinds() {
            let r = retract(&kind, &u, &d, 0.0).unwrap();
            assert_eq!(r.matrix(), u.matrix(), "{}", kind.name());
        }
    }

    #[test]
    fn single_column_closed_forms() {
        let (u, d) = line_setup();
        let s = std::f64::consts::FRAC_1_SQRT_2;

        let qr = retract(&RetractionKind::Qr, &u, &d, 1.0).unwrap();
        assert!((qr.matrix() - DenseMatrix::from_column_slice(3, 1, &[s, s, 0.0])).norm() < 1e-14);

        let pd = retract(&RetractionKind::Pd, &u, &d, 1.0).unwrap();
        assert!((pd.matrix() - qr.matrix()).norm() < 1e-14);

        // tan(theta/2) = 1/2 gives (cos, sin) = (0.6, 0.8).
        let wy = retract(&RetractionKind::Wy, &u, &d, 1.0).unwrap();
        assert!(
            (wy.matrix() - DenseMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0])).norm() < 1e-14
        );

        let geo = retract(&RetractionKind::Geodesic, &u, &d, 1.0).unwrap();
        let expected = DenseMatrix::from_column_slice(3, 1, &[1f64.cos(), 1f64.sin(), 0.0]);
        assert!((geo.matrix() - expected).norm() < 1e-14);
    }

    #[test]
    fn skew_generator_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let u = StiefelPoint::random(&mut rng, 8, 3);
        let d = GrassmannTangent::random(&mut rng, &u);
        let w = SkewGenerator::new(&u, &d).unwrap();
        let dense = w.dense();
        assert!((&dense + dense.transpose()).norm() < 1e-12 * dense.norm());
        assert!((dense * u.matrix() - d.matrix()).norm() < 1e-12 * d.norm());
        assert!((w.fro_norm() - w.dense().norm()).abs() < 1e-10 * d.norm());
    }

    #[test]
    fn ga_with_zero_p_matches_wy() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..10 {
            let u = StiefelPoint::random(&mut rng, 9, 3);
            let d = GrassmannTangent::random(&mut rng, &u);
            let t = 0.4 / d.norm();
            let via_resolvent = ga_resolvent(&u, &d, t, &GaPolynomial::Zero).unwrap();
            let via_formula = retract(&RetractionKind::Wy, &u, &d, t).unwrap();
            assert!((via_resolvent.matrix() - via_formula.matrix()).norm() < 1e-13);
        }
    }

    #[test]
    fn ga_with_exponential_p_matches_geodesic() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..10 {
            let u = StiefelPoint::random(&mut rng, 9, 3);
            let d = GrassmannTangent::random(&mut rng, &u);
            let t = 0.7 / d.norm();
            let ga = ga_resolvent(&u, &d, t, &GaPolynomial::ExpRemainder).unwrap();
            let geo = retract(&RetractionKind::Geodesic, &u, &d, t).unwrap();
            assert!((ga.matrix() - geo.matrix()).norm() < 1e-10);
        }
    }

    #[test]
    fn ga_pade2_matches_dense_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let u = StiefelPoint::random(&mut rng, 6, 2);
        let d = GrassmannTangent::random(&mut rng, &u);
        let t = 0.3;
        let w = SkewGenerator::new(&u, &d).unwrap().dense();
        let eye = DenseMatrix::identity(6, 6);
        let num = &eye + &w * (t / 2.0) + &w * &w * (t * t / 12.0);
        let den = &eye - &w * (t / 2.0) + &w * &w * (t * t / 12.0);
        let dense = den.lu().solve(&(num * u.matrix())).unwrap();
        let reduced = retract(&RetractionKind::GaPade(2), &u, &d, t).unwrap();
        assert!((reduced.matrix() - dense).norm() < 1e-12);
    }

    #[test]
    fn every_kind_returns_orthonormal_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        for _ in 0..5 {
            let u = StiefelPoint::random(&mut rng, 10, 4);
            let d = GrassmannTangent::random(&mut rng, &u);
            for kind in all_kinds() {
                for &scale in &[0.1, 1.0, 2.0] {
                    let t = scale / d.norm();
                    let r = retract(&kind, &u, &d, t).unwrap();
                    assert!(
                        r.drift() <= 1e-11 * 2.0,
                        "{} drift {:.3e}",
                        kind.name(),
                        r.drift()
                    );
                }
            }
        }
    }

    #[test]
    fn zero_direction_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let u = StiefelPoint::random(&mut rng, 6, 2);
        let d = GrassmannTangent::zero(u.clone());
        for kind in all_kinds() {
            let r = retract(&kind, &u, &d, 0.9).unwrap();
            assert!((r.matrix() - u.matrix()).norm() < 1e-13, "{}", kind.name());
        }
    }

    #[test]
    fn singular_resolvent_is_reported() {
        // With P = z^2 + z^3/2 the denominator polynomial vanishes on the
        // spectrum of the skew generator at t = 1 for a unit direction.
        let (u, d) = line_setup();
        let res = ga_resolvent(
            &u,
            &d,
            1.0,
            &GaPolynomial::MonomialCoeffs(vec![1.0, 0.5]),
        );
        assert!(matches!(res, Err(Error::StepTooLarge { .. })));
        // Shorter steps of the same map are fine.
        assert!(ga_resolvent(&u, &d, 0.3, &GaPolynomial::MonomialCoeffs(vec![1.0, 0.5])).is_ok());
    }

    #[test]
    fn kind_parsing_round_trips() {
        for name in ["qr", "pd", "wy", "ga-pade2", "ga-pade3", "geodesic"] {
            let kind: RetractionKind = name.parse().unwrap();
            assert_eq!(kind.name(), name);
        }
        assert!("ga-pade4".parse::<RetractionKind>().is_err());
        assert!(RetractionKind::GaPade(4).validate().is_err());
    }
}
