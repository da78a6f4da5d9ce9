//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    eigenvalues(a).iter().map(|l| l.norm()).fold(0.0, f64::max)
}

const SCHUR_MAX_ITER: usize = 10_000;
const ABERTH_MAX_ITER: usize = 500;

/// Eigenvalues of a real square matrix. Uses the real Schur form and falls
/// back to the roots of the characteristic polynomial when the QR iteration
/// stalls (defective matrices such as Jordan blocks).
pub fn eigenvalues(a: &Mat) -> Vec<C64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    if let Some(schur) = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER) {
        return schur.complex_eigenvalues().iter().copied().collect();
    }
    polynomial_roots(&characteristic_polynomial(a))
}

/// Coefficients `c_0 .. c_{n-1}` of the monic characteristic polynomial
/// `x^n + c_{n-1} x^{n-1} + ... + c_0` (Faddeev-LeVerrier).
pub fn characteristic_polynomial(a: &Mat) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![0.0; n];
    let mut m = Mat::zeros(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        m = a * &m + Mat::identity(n, n) * c_prev;
        let c = -(a * &m).trace() / k as f64;
        coeffs[n - k] = c;
        c_prev = c;
    }
    coeffs
}

/// Roots of the monic polynomial `x^n + c_{n-1} x^{n-1} + ... + c_0` by
/// Aberth-Ehrlich iteration.
pub fn polynomial_roots(coeffs: &[f64]) -> Vec<C64> {
    let n = coeffs.len();
    if n == 0 {
        return Vec::new();
    }
    let eval = |z: C64| -> (C64, C64) {
        let mut p = C64::new(1.0, 0.0);
        let mut dp = C64::new(0.0, 0.0);
        for &c in coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    };
    let radius = 1.0 + coeffs.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let mut z: Vec<C64> = (0..n)
        .map(|k| C64::from_polar(0.5 * radius, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64))
        .collect();
    for _ in 0..ABERTH_MAX_ITER {
        let mut moved = 0.0f64;
        for i in 0..n {
            let (p, dp) = eval(z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: C64 = (0..n).filter(|&j| j != i).map(|j| C64::new(1.0, 0.0) / (z[i] - z[j])).sum();
            let step = ratio / (C64::new(1.0, 0.0) - ratio * repulsion);
            if step.is_finite() {
                z[i] -= step;
                moved = moved.max(step.norm() / z[i].norm().max(1.0));
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn check_square(m: &Mat, n: usize, what: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::dims(what, (n, n), m.shape()));
    }
    Ok(())
}

pub fn check_shape(m: &Mat, shape: (usize, usize), what: &str) -> Result<()> {
    if m.shape() != shape {
        return Err(Error::dims(what, shape, m.shape()));
    }
    Ok(())
}

pub fn check_len(v: &Vector, len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::dims(what, (len, 1), (v.len(), 1)));
    }
    Ok(())
}

pub fn check_symmetric(m: &Mat, what: &str) -> Result<()> {
    let scale = m.norm().max(1.0);
    if (m - m.transpose()).norm() > 1e-10 * scale {
        return Err(Error::NotSymmetric { what: what.into() });
    }
    Ok(())
}

/// Eigen-decomposition of the symmetric part of `m`, eigenvalues ascending.
pub fn sym_eigen_sorted(m: &Mat) -> (Vector, Mat) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

pub fn max_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.max()
}

/// Returns `F` with `F F^T = m` for a symmetric PSD `m`.
///
/// Eigenvalues below `-1e-12 * trace` are rejected; the ones between that
/// bound and zero are clamped to zero.
pub fn psd_factor(m: &Mat, what: &str) -> Result<Mat> {
    check_symmetric(m, what)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let tol = 1e-12 * m.trace().abs();
    let min = eig.eigenvalues.min();
    if min < -tol {
        return Err(Error::NotPositiveSemidefinite {
            what: what.into(),
            min_eigenvalue: min,
        });
    }
    let mut f = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    Ok(f)
}

/// Symmetric PSD square root, negative eigenvalues clamped to zero.
pub fn psd_sqrt(m: &Mat) -> Mat {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    symmetrize(&(v * Mat::from_diagonal(&d) * v.transpose()))
}

pub fn check_psd(m: &Mat, what: &str) -> Result<()> {
    psd_factor(m, what).map(|_| ())
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &Mat, what: &str) -> Result<Mat> {
    let chol = nalgebra::Cholesky::new(symmetrize(m)).ok_or_else(|| Error::NotPositiveDefinite {
        what: what.into(),
    })?;
    Ok(symmetrize(&chol.inverse()))
}

/// Numerical rank with singular-value cutoff `rel_tol * sigma_max`.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Sum of the series `sum_t A^t Q (A^T)^t`, i.e. the solution of the Stein
/// equation `S = A S A^T + Q`, by fixed-point iteration from `S = 0`.
///
/// Stops once the newest term is below `rel_tol * |S|_F`.
pub fn stein_series(a: &Mat, q: &Mat, rel_tol: f64, max_iter: usize) -> Result<Mat> {
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(Error::UnstableSystem { spectral_radius: rho });
    }
    let at = a.transpose();
    let mut term = q.clone();
    let mut sum = q.clone();
    for _ in 0..max_iter {
        term = a * &term * &at;
        sum += &term;
        let tn = term.norm();
        if tn <= rel_tol * sum.norm() || tn == 0.0 {
            return Ok(symmetrize(&sum));
        }
    }
    Err(Error::NoConvergence { iterations: max_iter })
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

pub fn rows_to_mat(rows: &[Vec<f64>], what: &str) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::DimensionMismatch {
                what: format!("{what} row {i}"),
                expected: ncols.to_string(),
                found: r.len().to_string(),
            });
        }
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
