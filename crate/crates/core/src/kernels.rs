//! Dense numerical primitives: thin SVD, sign-fixed QR, symmetric
//! eigendecomposition, matrix exponential and SPD solves.
//!
//! Factorizations are backed by nalgebra, wrapped here to pin down the
//! uniqueness conventions (ordering and signs) that the geometry and
//! retraction layers depend on for reproducible output.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense double-precision matrix used throughout the crate.
pub type DenseMatrix = DMatrix<f64>;
/// Dense double-precision column vector.
pub type DenseVector = DVector<f64>;

/// Thin SVD `A = left * diag(singulars) * right^T`.
///
/// Singular values are non-increasing; the first nonzero entry of every
/// left column is positive so the factors are a deterministic function of
/// the input.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// `rows x k` with orthonormal columns.
    pub left: DenseMatrix,
    /// Non-increasing, non-negative, length `k`.
    pub singulars: DenseVector,
    /// `cols x k` with orthonormal columns.
    pub right: DenseMatrix,
}

impl SvdFactors {
    /// Reassembles `left * diag(singulars) * right^T`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let k = self.singulars.len();
        let mut scaled = self.left.clone();
        for j in 0..k {
            scaled.column_mut(j).scale_mut(self.singulars[j]);
        }
        scaled * self.right.transpose()
    }
}

fn check_finite(name: &str, a: &DenseMatrix) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} contains non-finite entries"
        )))
    }
}

/// Flips the sign of paired columns so the first nonzero entry of each
/// `left` column is positive.
fn normalize_column_signs(left: &mut DenseMatrix, right: &mut DenseMatrix) {
    for j in 0..left.ncols() {
        let flip = left
            .column(j)
            .iter()
            .find(|x| x.abs() > 0.0)
            .map(|x| *x < 0.0)
            .unwrap_or(false);
        if flip {
            left.column_mut(j).neg_mut();
            right.column_mut(j).neg_mut();
        }
    }
}

/// Thin singular value decomposition of a `rows >= cols` matrix.
pub fn thin_svd(a: &DenseMatrix) -> Result<SvdFactors> {
    check_finite("svd input", a)?;
    if a.nrows() < a.ncols() {
        return Err(Error::ShapeMismatch {
            expected: "rows >= cols".into(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    let k = a.ncols();
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested u");
    let v_t = svd.v_t.expect("requested v_t");
    let sigma = svd.singular_values;

    // Sort non-increasing; nalgebra already orders values but a stable
    // explicit sort keeps the convention independent of the backend.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());

    let mut left = DenseMatrix::zeros(a.nrows(), k);
    let mut right = DenseMatrix::zeros(a.ncols(), k);
    let mut singulars = DenseVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &v_t.transpose().column(src));
        singulars[dst] = sigma[src];
    }
    normalize_column_signs(&mut left, &mut right);
    Ok(SvdFactors {
        left,
        singulars,
        right,
    })
}

/// QR factorization `A = Q R` with `R` upper triangular and a strictly
/// positive diagonal, which makes the factors unique for full-rank input.
pub fn qr_positive(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    check_finite("qr input", a)?;
    if a.nrows() < a.ncols() {
        return Err(Error::ShapeMismatch {
            expected: "rows >= cols".into(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    let tol = 1e-14 * a.norm().max(f64::MIN_POSITIVE);
    for j in 0..r.ncols() {
        let d = r[(j, j)];
        if d.abs() <= tol {
            return Err(Error::Factorization(format!(
                "rank deficiency detected at column {j} (|R[{j},{j}]| = {:.3e})",
                d.abs()
            )));
        }
        if d < 0.0 {
            // Move the sign into Q to keep the diagonal positive.
            q.column_mut(j).neg_mut();
            let ncols = r.ncols();
            for c in j..ncols {
                r[(j, c)] = -r[(j, c)];
            }
        }
    }
    Ok((q, r))
}

/// Symmetric eigendecomposition with eigenvalues in ascending order.
///
/// Returns `(values, vectors)` with `S * vectors = vectors * diag(values)`
/// and orthonormal `vectors`.
pub fn sym_eig(s: &DenseMatrix) -> Result<(DenseVector, DenseMatrix)> {
    check_finite("eig input", s)?;
    if s.nrows() != s.ncols() {
        return Err(Error::ShapeMismatch {
            expected: "square".into(),
            got: format!("{}x{}", s.nrows(), s.ncols()),
        });
    }
    let asym = (s - s.transpose()).norm();
    if asym > 1e-12 * s.norm().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "matrix is not symmetric (||S - S^T||_F = {asym:.3e})"
        )));
    }
    let n = s.nrows();
    let sym = (s + s.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let mut values = DenseVector::zeros(n);
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    // Deterministic eigenvector signs.
    for j in 0..n {
        let flip = vectors
            .column(j)
            .iter()
            .find(|x| x.abs() > 0.0)
            .map(|x| *x < 0.0)
            .unwrap_or(false);
        if flip {
            vectors.column_mut(j).neg_mut();
        }
    }
    Ok((values, vectors))
}

/// Matrix exponential via scaling-and-squaring around a (6,6) Pade core.
pub fn matrix_exp(w: &DenseMatrix) -> Result<DenseMatrix> {
    check_finite("exp input", w)?;
    if w.nrows() != w.ncols() {
        return Err(Error::ShapeMismatch {
            expected: "square".into(),
            got: format!("{}x{}", w.nrows(), w.ncols()),
        });
    }
    let n = w.nrows();
    let norm = w
        .column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let b = w / 2f64.powi(squarings as i32);

    // (6,6) Pade: exp(B) ~ q(-B)^{-1} q(B), q(B) = sum c_j B^j.
    const M: usize = 6;
    let mut coeffs = [0.0; M + 1];
    coeffs[0] = 1.0;
    for j in 0..M {
        coeffs[j + 1] = coeffs[j] * (M - j) as f64 / (((2 * M - j) * (j + 1)) as f64);
    }
    let mut num = DenseMatrix::identity(n, n) * coeffs[0];
    let mut den = num.clone();
    let mut power = DenseMatrix::identity(n, n);
    for (j, &c) in coeffs.iter().enumerate().skip(1) {
        power = &power * &b;
        num += &power * c;
        if j % 2 == 0 {
            den += &power * c;
        } else {
            den -= &power * c;
        }
    }
    let mut result = den
        .lu()
        .solve(&num)
        .ok_or_else(|| Error::Factorization("Pade denominator is singular".into()))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Solves `L x = b` for symmetric positive definite `L` via Cholesky.
pub fn solve_spd(l: &DenseMatrix, b: &DenseVector) -> Result<DenseVector> {
    check_finite("spd matrix", l)?;
    if l.nrows() != l.ncols() || l.nrows() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}x{0} with rhs {0}", l.nrows()),
            got: format!("{}x{} with rhs {}", l.nrows(), l.ncols(), b.len()),
        });
    }
    let chol = l
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}
