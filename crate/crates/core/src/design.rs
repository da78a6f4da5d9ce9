//! Offline watermark design for a known plant.
//!
//! The detection objective `tr(U P)` is maximised subject to the LQG budget
//! `tr(U X) <= delta`. The optimum is rank one, `U* = z z^T`, with `z` the top
//! generalized eigenvector of the pencil `(P, X)` scaled to `z^T X z = delta`.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    check_shape, check_square, min_eigenvalue, spd_inverse, stein_series, sym_eigen_sorted,
    symmetrize, Mat, Vector,
};
use crate::model::PlantModel;

const SERIES_TOL: f64 = 1e-14;
const SERIES_MAX_ITER: usize = 1_000_000;
const TIE_GAP: f64 = 1e-9;

/// Blocks of the LQG weight `X = [[X_yy, X_yphi], [X_phiy, X_phiphi]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqgWeights {
    xyy: Mat,
    xyphi: Mat,
    xphiphi: Mat,
}

impl LqgWeights {
    pub fn new(xyy: Mat, xyphi: Mat, xphiphi: Mat) -> Result<Self> {
        let m = xyy.nrows();
        let p = xphiphi.nrows();
        check_square(&xyy, m, "X_yy")?;
        check_square(&xphiphi, p, "X_phiphi")?;
        check_shape(&xyphi, (m, p), "X_yphi")?;
        let w = Self { xyy, xyphi, xphiphi };
        let full = w.full();
        crate::linalg::check_symmetric(&full, "X")?;
        if Cholesky::new(symmetrize(&full)).is_none() {
            return Err(Error::NotPositiveDefinite { what: "X".into() });
        }
        Ok(w)
    }

    pub fn identity(m: usize, p: usize) -> Self {
        Self {
            xyy: Mat::identity(m, m),
            xyphi: Mat::zeros(m, p),
            xphiphi: Mat::identity(p, p),
        }
    }

    pub fn m(&self) -> usize {
        self.xyy.nrows()
    }

    pub fn p(&self) -> usize {
        self.xphiphi.nrows()
    }

    pub fn xyy(&self) -> &Mat {
        &self.xyy
    }

    pub fn xyphi(&self) -> &Mat {
        &self.xyphi
    }

    pub fn xphiy(&self) -> Mat {
        self.xyphi.transpose()
    }

    pub fn xphiphi(&self) -> &Mat {
        &self.xphiphi
    }

    /// The assembled `(m+p) x (m+p)` weight.
    pub fn full(&self) -> Mat {
        let (m, p) = (self.m(), self.p());
        let mut x = Mat::zeros(m + p, m + p);
        x.view_mut((0, 0), (m, m)).copy_from(&self.xyy);
        x.view_mut((0, m), (m, p)).copy_from(&self.xyphi);
        x.view_mut((m, 0), (p, m)).copy_from(&self.xyphi.transpose());
        x.view_mut((m, m), (p, p)).copy_from(&self.xphiphi);
        x
    }

    /// `X_phiphi - X_phiy X_yy^{-1} X_yphi`, a lower bound on every `X`
    /// matrix built from these weights.
    pub fn schur_complement(&self) -> Result<Mat> {
        let inv = spd_inverse(&self.xyy, "X_yy")?;
        Ok(symmetrize(&(&self.xphiphi - self.xphiy() * inv * &self.xyphi)))
    }

    fn check_dims(&self, model: &PlantModel) -> Result<()> {
        check_square(&self.xyy, model.m(), "X_yy")?;
        check_square(&self.xphiphi, model.p(), "X_phiphi")
    }
}

/// How the LQG budget `delta` is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum Budget {
    Absolute(f64),
    FractionOfJ0(f64),
}

impl Budget {
    pub fn resolve(self, j0: f64) -> Result<f64> {
        match self {
            Budget::Absolute(d) if d > 0.0 && d.is_finite() => Ok(d),
            Budget::Absolute(d) => Err(Error::InvalidParameter(format!("budget {d} must be positive"))),
            Budget::FractionOfJ0(f) if f > 0.0 && f <= 1.0 => Ok(f * j0),
            Budget::FractionOfJ0(f) => Err(Error::InvalidParameter(format!(
                "budget fraction {f} must lie in (0, 1]"
            ))),
        }
    }
}

/// `W = C Sigma C^T + R` (plus the `C S + S^T C^T` cross terms when the
/// noises are correlated): the covariance of the noise part of `y_k`.
pub fn noise_output_cov(model: &PlantModel) -> Result<Mat> {
    let sigma = model.state_cov()?;
    let cs = model.c() * model.s();
    let w = symmetrize(&(model.c() * sigma * model.c().transpose() + model.r() + &cs + cs.transpose()));
    if Cholesky::new(w.clone()).is_none() {
        return Err(Error::DegenerateNoiseCovariance);
    }
    Ok(w)
}

/// `sum_tau H_tau U H_tau^T`, the stationary covariance of the watermark's
/// output response.
pub fn watermark_output_cov(model: &PlantModel, u: &Mat) -> Result<Mat> {
    check_square(u, model.p(), "U")?;
    let inner = stein_series(model.a(), &(model.b() * u * model.b().transpose()), SERIES_TOL, SERIES_MAX_ITER)?;
    Ok(symmetrize(&(model.c() * inner * model.c().transpose())))
}

/// `P = sum_tau H_tau^T W^{-1} H_tau`.
pub fn build_p(model: &PlantModel, w: &Mat) -> Result<Mat> {
    check_square(w, model.m(), "W")?;
    let w_inv = spd_inverse(w, "W").map_err(|_| Error::Singular { what: "W".into() })?;
    output_weighted_gramian(model, &w_inv)
}

/// `X = sum_tau H_tau^T X_yy H_tau + H_0^T X_yphi + X_phiy H_0 + X_phiphi`.
pub fn build_x(model: &PlantModel, weights: &LqgWeights) -> Result<Mat> {
    weights.check_dims(model)?;
    let h0 = model.markov_parameter(0);
    let cross = h0.transpose() * weights.xyphi();
    let x = symmetrize(&(output_weighted_gramian(model, weights.xyy())? + &cross + cross.transpose() + weights.xphiphi()));
    let gap = &x - weights.schur_complement()?;
    if min_eigenvalue(&gap) < -1e-10 * x.norm().max(1.0) {
        return Err(Error::NotPositiveDefinite {
            what: "X minus the Schur complement of the LQG weight".into(),
        });
    }
    Ok(x)
}

/// `sum_tau H_tau^T M H_tau = B^T (sum_tau (A^T)^tau C^T M C A^tau) B`.
fn output_weighted_gramian(model: &PlantModel, weight: &Mat) -> Result<Mat> {
    let q = model.c().transpose() * weight * model.c();
    let inner = stein_series(&model.a().transpose(), &q, SERIES_TOL, SERIES_MAX_ITER)?;
    Ok(symmetrize(&(model.b().transpose() * inner * model.b())))
}

/// Solution of `max tr(U P)` s.t. `tr(U X) <= delta`, `U >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WatermarkOptimum {
    pub u_star: Mat,
    pub z: Vector,
    pub lambda_max: f64,
    /// The top generalized eigenvalue is not simple; `z` was chosen by the
    /// tie-break rule.
    pub degenerate: bool,
}

impl WatermarkOptimum {
    pub fn objective(&self, p_mat: &Mat) -> f64 {
        (&self.u_star * p_mat).trace()
    }
}

/// Rank-one optimal watermark covariance.
///
/// The pencil is reduced with `X = L L^T` to the symmetric matrix
/// `L^{-1} P L^{-T}`. When the top eigenvalue is repeated (relative gap below
/// 1e-9) the direction is the projection onto the top eigenspace of the first
/// coordinate axis with maximal projection, which makes the result
/// independent of the eigensolver's basis. `z` is signed so that its
/// largest-magnitude entry is positive.
pub fn optimal_watermark(p_mat: &Mat, x_mat: &Mat, delta: f64) -> Result<WatermarkOptimum> {
    let p = x_mat.nrows();
    check_square(x_mat, p, "X")?;
    check_square(p_mat, p, "P")?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("budget {delta} must be positive")));
    }
    let chol = Cholesky::new(symmetrize(x_mat)).ok_or_else(|| Error::NotPositiveDefinite { what: "X".into() })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .solve_lower_triangular(&Mat::identity(p, p))
        .ok_or_else(|| Error::Singular { what: "Cholesky factor of X".into() })?;
    let reduced = symmetrize(&(&l_inv * symmetrize(p_mat) * l_inv.transpose()));
    let (values, vectors) = sym_eigen_sorted(&reduced);
    let lambda_max = values[p - 1];
    let scale = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tied: Vec<usize> = (0..p)
        .filter(|&i| lambda_max - values[i] <= TIE_GAP * scale)
        .collect();
    let degenerate = tied.len() > 1;

    // Back-transform the top eigenspace: z = L^{-T} y.
    let basis = Mat::from_fn(p, tied.len(), |i, j| vectors[(i, tied[j])]);
    let z_space = l_inv.transpose() * basis;
    let direction = if degenerate {
        canonical_direction(&z_space)
    } else {
        z_space.column(0).into_owned()
    };

    let norm2 = (direction.transpose() * x_mat * &direction)[(0, 0)];
    let mut z = direction * (delta / norm2).sqrt();
    let imax = z.iamax();
    if z[imax] < 0.0 {
        z.neg_mut();
    }
    let u_star = &z * z.transpose();
    Ok(WatermarkOptimum {
        u_star,
        z,
        lambda_max,
        degenerate,
    })
}

/// Orthogonal projection of the first coordinate axis (among those with the
/// largest projection) onto the column space of `span`.
fn canonical_direction(span: &Mat) -> Vector {
    let svd = span.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&j| svd.singular_values[j] > 1e-12 * smax)
        .collect();
    let basis = Mat::from_fn(span.nrows(), cols.len(), |i, j| u[(i, cols[j])]);
    let norms: Vec<f64> = (0..basis.nrows()).map(|i| basis.row(i).norm()).collect();
    let best = norms.iter().cloned().fold(0.0, f64::max);
    let axis = norms
        .iter()
        .position(|&v| v >= best * (1.0 - 1e-9))
        .unwrap_or(0);
    &basis * basis.row(axis).transpose()
}

/// Expected KL divergence between the attacked and nominal output laws,
/// `tr(U W^{-1}) - 1/2 logdet(I + U W^{-1})`.
pub fn expected_kl(u_cal: &Mat, w: &Mat) -> Result<f64> {
    let mu = whitened_eigenvalues(u_cal, w)?;
    Ok(mu.iter().map(|&x| x - 0.5 * x.ln_1p()).sum())
}

/// Lower and upper bounds on [`expected_kl`] in terms of `t = tr(U W^{-1})`:
/// `t/2` and `t - 1/2 log(1 + t)`.
pub fn kl_bounds(u_cal: &Mat, w: &Mat) -> Result<(f64, f64)> {
    let t: f64 = whitened_eigenvalues(u_cal, w)?.iter().sum();
    Ok((0.5 * t, t - 0.5 * t.ln_1p()))
}

/// Eigenvalues of `L^{-1} U L^{-T}` where `W = L L^T`, clamped at zero.
fn whitened_eigenvalues(u_cal: &Mat, w: &Mat) -> Result<Vec<f64>> {
    let m = w.nrows();
    check_square(u_cal, m, "U")?;
    let chol = Cholesky::new(symmetrize(w)).ok_or_else(|| Error::Singular { what: "W".into() })?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&Mat::identity(m, m))
        .ok_or_else(|| Error::Singular { what: "W".into() })?;
    let white = symmetrize(&(&l_inv * u_cal * l_inv.transpose()));
    let (values, _) = sym_eigen_sorted(&white);
    Ok(values.iter().map(|&v| v.max(0.0)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqgCost {
    /// Cost without watermark, `tr(X_yy W)`.
    pub j0: f64,
    /// Increase caused by the watermark, `tr(X S(U))`.
    pub delta_j: f64,
}

/// LQG cost split `J = J0 + dJ` with `dJ = tr(X S)` and
/// `S = [[U_cal(U), H_0 U], [U H_0^T, U]]`.
pub fn lqg_cost(model: &PlantModel, weights: &LqgWeights, u: &Mat, w: &Mat) -> Result<LqgCost> {
    weights.check_dims(model)?;
    check_square(w, model.m(), "W")?;
    check_square(u, model.p(), "U")?;
    let (m, p) = (model.m(), model.p());
    let h0u = model.markov_parameter(0) * u;
    let mut s = Mat::zeros(m + p, m + p);
    s.view_mut((0, 0), (m, m)).copy_from(&watermark_output_cov(model, u)?);
    s.view_mut((0, m), (m, p)).copy_from(&h0u);
    s.view_mut((m, 0), (p, m)).copy_from(&h0u.transpose());
    s.view_mut((m, m), (p, p)).copy_from(u);
    Ok(LqgCost {
        j0: (weights.xyy() * w).trace(),
        delta_j: (weights.full() * s).trace(),
    })
}

/// Everything the offline design produces for one plant.
#[derive(Debug, Clone, PartialEq)]
pub struct WatermarkDesign {
    pub u_star: Mat,
    pub z: Vector,
    pub lambda_max: f64,
    pub p_mat: Mat,
    pub x_mat: Mat,
    pub u_cal: Mat,
    pub w_cal: Mat,
    pub delta: f64,
    pub j0: f64,
    pub degenerate: bool,
}

impl WatermarkDesign {
    pub fn new(model: &PlantModel, weights: &LqgWeights, budget: Budget) -> Result<Self> {
        let w_cal = noise_output_cov(model)?;
        let j0 = (weights.xyy() * &w_cal).trace();
        let delta = budget.resolve(j0)?;
        let p_mat = build_p(model, &w_cal)?;
        let x_mat = build_x(model, weights)?;
        let opt = optimal_watermark(&p_mat, &x_mat, delta)?;
        let u_cal = watermark_output_cov(model, &opt.u_star)?;
        Ok(Self {
            u_star: opt.u_star,
            z: opt.z,
            lambda_max: opt.lambda_max,
            p_mat,
            x_mat,
            u_cal,
            w_cal,
            delta,
            j0,
            degenerate: opt.degenerate,
        })
    }

    pub fn expected_kl(&self) -> Result<f64> {
        expected_kl(&self.u_cal, &self.w_cal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn scalar_model(a: f64, b: f64, c: f64, q: f64, r: f64) -> PlantModel {
        PlantModel::new(m1(a), m1(b), m1(c), m1(q), m1(r)).unwrap()
    }

    #[test]
    fn noise_cov_scalar() {
        let w = noise_output_cov(&scalar_model(0.5, 1.0, 1.0, 1.0, 1.0)).unwrap();
        assert!((w[(0, 0)] - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn noise_cov_without_process_noise_is_r() {
        let r = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a = Mat::zeros(2, 2);
        let model = PlantModel::new(a, Mat::identity(2, 2), Mat::identity(2, 2), Mat::zeros(2, 2), r.clone()).unwrap();
        assert!((noise_output_cov(&model).unwrap() - r).norm() < 1e-15);
    }

    #[test]
    fn degenerate_noise_cov() {
        let model = scalar_model(0.5, 1.0, 1.0, 0.0, 0.0);
        assert!(matches!(noise_output_cov(&model), Err(Error::DegenerateNoiseCovariance)));
    }

    #[test]
    fn watermark_cov_cases() {
        let model = scalar_model(0.5, 1.0, 1.0, 1.0, 1.0);
        assert_eq!(watermark_output_cov(&model, &m1(0.0)).unwrap()[(0, 0)], 0.0);
        let u = watermark_output_cov(&model, &m1(0.3)).unwrap();
        assert!((u[(0, 0)] - 0.4).abs() < 1e-13);
    }

    #[test]
    fn nilpotent_single_term() {
        let b = Mat::from_row_slice(2, 2, &[1.0, 0.5, 2.0, 1.5]);
        let c = Mat::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let model = PlantModel::new(Mat::zeros(2, 2), b, c, Mat::identity(2, 2), Mat::identity(2, 2)).unwrap();
        let cb = model.markov_parameter(0);
        let u = Mat::from_row_slice(2, 2, &[0.8, 0.1, 0.1, 0.3]);
        let expected = &cb * &u * cb.transpose();
        assert!((watermark_output_cov(&model, &u).unwrap() - expected).norm() < 1e-14);
        let p = build_p(&model, &Mat::identity(2, 2)).unwrap();
        assert!((p - cb.transpose() * &cb).norm() < 1e-14);
        let x = build_x(&model, &LqgWeights::identity(2, 2)).unwrap();
        assert!((x - cb.transpose() * &cb - Mat::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn no_input_path() {
        // B = 0 is not controllable, so skip the minimality check.
        let model = PlantModel::from_parts(m1(0.5), m1(0.0), m1(1.0), m1(1.0), m1(1.0), m1(0.0)).unwrap();
        let w = noise_output_cov(&model).unwrap();
        assert_eq!(build_p(&model, &w).unwrap().norm(), 0.0);
        let weights = LqgWeights::identity(1, 1);
        assert!((build_x(&model, &weights).unwrap() - m1(1.0)).norm() < 1e-15);
    }

    #[test]
    fn p_and_x_scalar() {
        let model = scalar_model(0.5, 1.0, 1.0, 1.0, 1.0);
        let p = build_p(&model, &m1(7.0 / 3.0)).unwrap();
        assert!((p[(0, 0)] - 4.0 / 7.0).abs() < 1e-13);
        let x = build_x(&model, &LqgWeights::identity(1, 1)).unwrap();
        assert!((x[(0, 0)] - 7.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn p_singular_w() {
        let model = scalar_model(0.5, 1.0, 1.0, 1.0, 1.0);
        assert!(matches!(build_p(&model, &m1(0.0)), Err(Error::Singular { .. })));
    }

    #[test]
    fn optimum_scalar() {
        let opt = optimal_watermark(&m1(4.0 / 7.0), &m1(7.0 / 3.0), 1.0).unwrap();
        assert!((opt.u_star[(0, 0)] - 3.0 / 7.0).abs() < 1e-14);
        assert!((opt.objective(&m1(4.0 / 7.0)) - 12.0 / 49.0).abs() < 1e-14);
        assert!(!opt.degenerate);
    }

    #[test]
    fn optimum_diagonal() {
        let p = Mat::from_diagonal(&Vector::from_vec(vec![2.0, 1.0]));
        let opt = optimal_watermark(&p, &Mat::identity(2, 2), 1.0).unwrap();
        let expected = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 0.0]));
        assert!((&opt.u_star - expected).norm() < 1e-14);
        assert!((opt.objective(&p) - 2.0).abs() < 1e-14);
        assert!((opt.lambda_max - 2.0).abs() < 1e-14);
    }

    #[test]
    fn optimum_zero_objective_tie_break() {
        let x = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let opt = optimal_watermark(&Mat::zeros(2, 2), &x, 1.5).unwrap();
        assert!(opt.degenerate);
        let mut expected = Mat::zeros(2, 2);
        expected[(0, 0)] = 1.5 / 2.0;
        assert!((&opt.u_star - expected).norm() < 1e-14);
        assert!(((&opt.u_star * &x).trace() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn optimum_isotropic_tie_break() {
        let opt = optimal_watermark(&Mat::identity(3, 3), &Mat::identity(3, 3), 1.0).unwrap();
        assert!(opt.degenerate);
        let mut e1 = Mat::zeros(3, 3);
        e1[(0, 0)] = 1.0;
        assert!((&opt.u_star - e1).norm() < 1e-14);
    }

    #[test]
    fn optimum_sign_convention() {
        let p = Mat::from_row_slice(2, 2, &[1.0, -0.9, -0.9, 1.0]);
        let opt = optimal_watermark(&p, &Mat::identity(2, 2), 1.0).unwrap();
        let imax = opt.z.iamax();
        assert!(opt.z[imax] > 0.0);
    }

    #[test]
    fn optimum_rejects_bad_inputs() {
        assert!(optimal_watermark(&m1(1.0), &m1(1.0), 0.0).is_err());
        assert!(matches!(
            optimal_watermark(&m1(1.0), &m1(-1.0), 1.0),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn kl_values() {
        let zero = expected_kl(&Mat::zeros(2, 2), &Mat::identity(2, 2)).unwrap();
        assert_eq!(zero, 0.0);
        let s = expected_kl(&m1(3.0), &m1(3.0)).unwrap();
        assert!((s - (1.0 - 0.5 * 2f64.ln())).abs() < 1e-14);
        assert!((s - 0.653426).abs() < 1e-6);
        let two = expected_kl(&Mat::identity(2, 2), &Mat::identity(2, 2)).unwrap();
        assert!((two - (2.0 - 2f64.ln())).abs() < 1e-14);
        assert!((two - 1.306853).abs() < 1e-6);
        assert!(matches!(expected_kl(&m1(1.0), &m1(0.0)), Err(Error::Singular { .. })));
    }

    #[test]
    fn lqg_cost_scalar() {
        let model = scalar_model(0.5, 1.0, 1.0, 1.0, 1.0);
        let w = noise_output_cov(&model).unwrap();
        let weights = LqgWeights::identity(1, 1);
        let zero = lqg_cost(&model, &weights, &m1(0.0), &w).unwrap();
        assert!((zero.j0 - 7.0 / 3.0).abs() < 1e-12);
        assert_eq!(zero.delta_j, 0.0);
        let c = lqg_cost(&model, &weights, &m1(0.6), &w).unwrap();
        assert!((c.delta_j - 7.0 / 3.0 * 0.6).abs() < 1e-12);
        let delta = 2.5;
        let sat = lqg_cost(&model, &weights, &m1(3.0 * delta / 7.0), &w).unwrap();
        assert!((sat.delta_j - delta).abs() < 1e-12);
    }

    #[test]
    fn weights_must_be_positive_definite() {
        let err = LqgWeights::new(m1(1.0), m1(2.0), m1(1.0));
        assert!(matches!(err, Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn budget_resolution() {
        assert_eq!(Budget::Absolute(2.0).resolve(10.0).unwrap(), 2.0);
        assert!((Budget::FractionOfJ0(0.1).resolve(10.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(Budget::FractionOfJ0(0.0).resolve(10.0).is_err());
        assert!(Budget::FractionOfJ0(1.5).resolve(10.0).is_err());
        assert!(Budget::Absolute(-1.0).resolve(10.0).is_err());
    }

    #[test]
    fn scalar_design_pipeline() {
        let model = scalar_model(0.5, 1.0, 1.0, 1.0, 1.0);
        let d = WatermarkDesign::new(&model, &LqgWeights::identity(1, 1), Budget::Absolute(1.0)).unwrap();
        assert!((d.u_star[(0, 0)] - 3.0 / 7.0).abs() < 1e-12);
        assert!((d.j0 - 7.0 / 3.0).abs() < 1e-12);
        let cost = lqg_cost(&model, &LqgWeights::identity(1, 1), &d.u_star, &d.w_cal).unwrap();
        assert!((cost.delta_j - 1.0).abs() < 1e-12);
    }
}
