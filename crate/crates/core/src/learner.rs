//! Online watermark design with simultaneous identification of the plant.
//!
//! Each step the learner
//!
//! 1. solves the rank-one design problem on its current estimates of `P`
//!    and `X`, giving `U_{k,*}`,
//! 2. injects `phi_k ~ N(0, U_k)` with `U_k = U_{k,*} + delta (k+1)^-beta I`,
//!    where the decaying term keeps the plant persistently excited,
//! 3. updates running cross-correlation estimates of the Markov parameters
//!    `H_0 .. H_{3n-2}` from the measured output,
//! 4. fits the minimal polynomial of `A` to the Markov parameters, takes its
//!    roots as the eigenvalues and recovers the modal residues `Omega_i`,
//! 5. splits the output into watermark response and noise, estimates the
//!    noise covariance `W`, and when the fitted polynomial is Schur stable
//!    refreshes `P`, `X` from closed-form geometric sums,
//! 6. evaluates the estimated detection statistic.

use std::collections::VecDeque;

use nalgebra::Cholesky;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::{optimal_watermark, LqgWeights};
use crate::detector::np_statistic;
use crate::error::{Error, Result};
use crate::linalg::{
    check_len, mat_to_rows, psd_sqrt, rows_to_mat, spd_inverse, sym_eigen_sorted, symmetrize,
    to_complex, CMat, CVector, Mat, Vector, C64,
};
use crate::model::{standard_normal_vector, Mode};

/// Fits with a condition number of the normal matrix above this are rejected.
pub const MAX_FIT_CONDITION: f64 = 1e12;
/// Roots must satisfy `|lambda| <= 1 - SCHUR_MARGIN`.
pub const SCHUR_MARGIN: f64 = 1e-6;
/// Minimum pairwise distance between fitted roots.
pub const ROOT_GAP: f64 = 1e-9;
const PINV_CUTOFF: f64 = 1e-10;
const W_REGULARIZATION: f64 = 1e-9;
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Assumed number of distinct eigenvalues of `A`.
    pub nbar: usize,
    /// Decay exponent of the exploration term, in (0, 1).
    pub beta: f64,
    /// LQG budget.
    pub delta: f64,
    /// Refit the modal model every `fit_every` steps.
    pub fit_every: usize,
}

impl LearnerConfig {
    pub fn new(nbar: usize, beta: f64, delta: f64) -> Self {
        Self {
            nbar,
            beta,
            delta,
            fit_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nbar == 0 {
            return Err(Error::InvalidParameter("nbar must be at least 1".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta {} must lie in (0, 1)",
                self.beta
            )));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "budget {} must be positive",
                self.delta
            )));
        }
        if self.fit_every == 0 {
            return Err(Error::InvalidParameter("fit_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of Markov parameters kept, `3 nbar - 1`.
    pub fn bank_len(&self) -> usize {
        3 * self.nbar - 1
    }
}

/// Least-squares coefficients of the monic polynomial annihilating the
/// Markov parameter sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialFit {
    /// `alpha_0 .. alpha_{nbar-1}` of `x^nbar + alpha_{nbar-1} x^{nbar-1} + ... + alpha_0`.
    pub alpha: Vec<f64>,
    /// Condition number of the normal matrix; infinite when singular.
    pub condition: f64,
}

impl PolynomialFit {
    pub fn well_conditioned(&self) -> bool {
        self.condition.is_finite() && self.condition <= MAX_FIT_CONDITION
    }
}

/// Solves `min |H_{nbar} + sum_i alpha_i H_i|_F` over stacked blocks
/// `H_i = [H_i; ..; H_{i+2 nbar-2}]` through its normal equations.
///
/// Needs `3 nbar - 1` Markov parameters.
pub fn fit_minimal_polynomial(bank: &[Mat], nbar: usize) -> Result<PolynomialFit> {
    if nbar == 0 || bank.len() < 3 * nbar - 1 {
        return Err(Error::InvalidParameter(format!(
            "need {} Markov parameters for nbar = {nbar}, got {}",
            3 * nbar.max(1) - 1,
            bank.len()
        )));
    }
    let depth = 2 * nbar - 1;
    let inner = |i: usize, j: usize| -> f64 { (0..depth).map(|l| bank[i + l].dot(&bank[j + l])).sum() };
    let xi = Mat::from_fn(nbar, nbar, &inner);
    let rhs = Vector::from_fn(nbar, |i, _| -inner(i, nbar));

    let (values, _) = sym_eigen_sorted(&xi);
    let lo = values[0];
    let hi = values[nbar - 1];
    let condition = if lo > 0.0 && hi > 0.0 { hi / lo } else { f64::INFINITY };
    let alpha = match Cholesky::new(symmetrize(&xi)) {
        Some(chol) if condition.is_finite() => chol.solve(&rhs).iter().copied().collect(),
        _ => vec![0.0; nbar],
    };
    Ok(PolynomialFit { alpha, condition })
}

/// Roots of `x^nbar + alpha_{nbar-1} x^{nbar-1} + ... + alpha_0` as the
/// eigenvalues of the companion matrix, with the Schur-stability flag
/// `max |lambda| <= 1 - 1e-6`.
///
/// Roots come back with exact conjugate symmetry, ordered by real part then
/// imaginary part.
pub fn roots_and_stability(alpha: &[f64]) -> (Vec<C64>, bool) {
    let n = alpha.len();
    let mut companion = Mat::zeros(n, n);
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    for (i, &a) in alpha.iter().enumerate() {
        companion[(i, n - 1)] = -a;
    }
    let raw: Vec<C64> = if n == 0 {
        Vec::new()
    } else {
        crate::linalg::eigenvalues(&companion)
    };
    let roots = conjugate_symmetric(raw);
    let stable = roots.iter().all(|l| l.norm() <= 1.0 - SCHUR_MARGIN);
    (roots, stable)
}

/// Snaps near-real roots onto the real axis, makes complex roots exact
/// conjugate pairs and sorts them.
fn conjugate_symmetric(mut roots: Vec<C64>) -> Vec<C64> {
    let n = roots.len();
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] {
            continue;
        }
        let li = roots[i];
        if li.im.abs() <= ROOT_GAP * li.norm().max(1.0) {
            roots[i] = C64::new(li.re, 0.0);
            done[i] = true;
            continue;
        }
        let target = li.conj();
        let partner = (0..n)
            .filter(|&j| j != i && !done[j])
            .min_by(|&a, &b| (roots[a] - target).norm().total_cmp(&(roots[b] - target).norm()));
        match partner {
            Some(j) => {
                let avg = (li + roots[j].conj()) * 0.5;
                roots[i] = avg;
                roots[j] = avg.conj();
                done[i] = true;
                done[j] = true;
            }
            None => {
                roots[i] = C64::new(li.re, 0.0);
                done[i] = true;
            }
        }
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    roots
}

/// Why a fitted model was not accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    /// No fit this step (too early or not on the refit cadence).
    Skipped,
    Accepted,
    IllConditioned,
    NotSchurStable,
    ClusteredRoots,
}

/// Least-squares recovery of the residues `Omega_i` from
/// `H_tau = sum_i lambda_i^tau Omega_i`, `tau = 0 .. len-1`.
///
/// Uses the SVD pseudo-inverse of the Vandermonde matrix (cutoff
/// `1e-10 sigma_max`) entry-wise, then averages each residue with the
/// conjugate of its partner's so that conjugate roots carry conjugate
/// residues. Returns `None` when two roots are closer than `1e-9`.
pub fn recover_modes(bank: &[Mat], lambdas: &[C64]) -> Option<Vec<CMat>> {
    let nbar = lambdas.len();
    for i in 0..nbar {
        for j in i + 1..nbar {
            if (lambdas[i] - lambdas[j]).norm() <= ROOT_GAP {
                return None;
            }
        }
    }
    let len = bank.len();
    let (m, p) = bank[0].shape();
    let vander = CMat::from_fn(len, nbar, |tau, i| lambdas[i].powu(tau as u32));
    let svd = vander.svd(true, true);
    let smax = svd.singular_values.max();
    let pinv = svd.pseudo_inverse(PINV_CUTOFF * smax).ok()?;

    let mut omegas: Vec<CMat> = (0..nbar)
        .map(|i| {
            let mut om = CMat::zeros(m, p);
            for (tau, h) in bank.iter().enumerate() {
                let w = pinv[(i, tau)];
                om += to_complex(h) * w;
            }
            om
        })
        .collect();

    let partners = conjugate_partners(lambdas);
    let snapshot = omegas.clone();
    for (i, om) in omegas.iter_mut().enumerate() {
        let j = partners[i];
        *om = (&snapshot[i] + snapshot[j].map(|z| z.conj())) * C64::new(0.5, 0.0);
    }
    Some(omegas)
}

fn conjugate_partners(lambdas: &[C64]) -> Vec<usize> {
    lambdas
        .iter()
        .map(|l| {
            let target = l.conj();
            (0..lambdas.len())
                .min_by(|&a, &b| {
                    (lambdas[a] - target)
                        .norm()
                        .total_cmp(&(lambdas[b] - target).norm())
                })
                .unwrap_or(0)
        })
        .collect()
}

/// `sum_ij Omega_i^T M Omega_j / (1 - lambda_i lambda_j)`, real symmetric part.
pub fn modal_gramian(lambdas: &[C64], omegas: &[CMat], weight: &Mat) -> Mat {
    let wc = to_complex(weight);
    let p = omegas[0].ncols();
    let mut acc = CMat::zeros(p, p);
    for (i, oi) in omegas.iter().enumerate() {
        let left = oi.transpose() * &wc;
        for (j, oj) in omegas.iter().enumerate() {
            let g = C64::new(1.0, 0.0) / (C64::new(1.0, 0.0) - lambdas[i] * lambdas[j]);
            acc += &left * oj * g;
        }
    }
    symmetrize(&real_part(&acc))
}

/// `sum_ij Omega_i U Omega_j^T / (1 - lambda_i lambda_j)`, the estimate of the
/// watermark's output covariance.
pub fn modal_output_cov(lambdas: &[C64], omegas: &[CMat], u: &Mat) -> Mat {
    let uc = to_complex(u);
    let m = omegas[0].nrows();
    let mut acc = CMat::zeros(m, m);
    for (i, oi) in omegas.iter().enumerate() {
        let left = oi * &uc;
        for (j, oj) in omegas.iter().enumerate() {
            let g = C64::new(1.0, 0.0) / (C64::new(1.0, 0.0) - lambdas[i] * lambdas[j]);
            acc += &left * oj.transpose() * g;
        }
    }
    symmetrize(&real_part(&acc))
}

/// Estimate of `X` from the modal model and the LQG weights.
pub fn modal_x(lambdas: &[C64], omegas: &[CMat], weights: &LqgWeights) -> Mat {
    let h0 = real_part(&omegas.iter().fold(CMat::zeros(omegas[0].nrows(), omegas[0].ncols()), |acc, o| acc + o));
    let cross = h0.transpose() * weights.xyphi();
    symmetrize(&(modal_gramian(lambdas, omegas, weights.xyy()) + &cross + cross.transpose() + weights.xphiphi()))
}

fn real_part(m: &CMat) -> Mat {
    m.map(|z| z.re)
}

/// Inverse of a sample covariance, regularised when its smallest eigenvalue
/// falls below `1e-9 tr(W)/m`.
fn regularized_inverse(w: &Mat) -> Result<Mat> {
    let m = w.nrows();
    let tr = w.trace();
    let floor = if tr > 0.0 { W_REGULARIZATION * tr / m as f64 } else { W_REGULARIZATION };
    let (values, _) = sym_eigen_sorted(w);
    let w = if values[0] < floor {
        w + Mat::identity(m, m) * floor
    } else {
        w.clone()
    };
    spd_inverse(&w, "W_k")
}

/// Output of one [`OnlineLearner::observe`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub k: u64,
    /// Estimated detection statistic.
    pub g_hat: f64,
    /// Estimated watermark response.
    pub phi_hat: Vector,
    pub fit: FitStatus,
    /// Whether the modal model in use came from a Schur-stable fit.
    pub gate: bool,
}

/// Complete state of the online algorithm at step `k`.
#[derive(Debug, Clone)]
pub struct OnlineLearner {
    config: LearnerConfig,
    weights: LqgWeights,
    k: u64,
    h_bank: Vec<Mat>,
    alpha: Vec<f64>,
    lambdas: Vec<C64>,
    omegas: Vec<CMat>,
    phi_hat_modes: Vec<CVector>,
    w_acc: Mat,
    w_est: Mat,
    p_est: Mat,
    x_est: Mat,
    u_star: Mat,
    u_k: Mat,
    /// `U_t^{-1} phi_t` for the most recent steps, newest first.
    weighted_inputs: VecDeque<Vector>,
    pending: Option<Vector>,
    fitted: bool,
    last_valid: bool,
    frozen: bool,
}

impl OnlineLearner {
    /// Starts from `P = I`, `X = X_phiphi` with all estimates zeroed.
    pub fn new(config: LearnerConfig, weights: LqgWeights) -> Result<Self> {
        config.validate()?;
        let (m, p) = (weights.m(), weights.p());
        let nbar = config.nbar;
        let x_est = weights.xphiphi().clone();
        Ok(Self {
            k: 0,
            h_bank: vec![Mat::zeros(m, p); config.bank_len()],
            alpha: vec![0.0; nbar],
            lambdas: vec![C64::new(0.0, 0.0); nbar],
            omegas: vec![CMat::zeros(m, p); nbar],
            phi_hat_modes: vec![CVector::zeros(m); nbar],
            w_acc: Mat::zeros(m, m),
            w_est: Mat::zeros(m, m),
            p_est: Mat::identity(p, p),
            x_est,
            u_star: Mat::zeros(p, p),
            u_k: Mat::zeros(p, p),
            weighted_inputs: VecDeque::with_capacity(config.bank_len()),
            pending: None,
            fitted: false,
            last_valid: false,
            frozen: false,
            config,
            weights,
        })
    }

    /// A learner that knows the true modal model, noise covariance and
    /// design matrices and never updates them. Its statistic coincides with
    /// the exact detector's.
    pub fn with_exact_parameters(
        config: LearnerConfig,
        weights: LqgWeights,
        modes: &[Mode],
        w_cal: &Mat,
        p_mat: &Mat,
        x_mat: &Mat,
    ) -> Result<Self> {
        let mut learner = Self::new(LearnerConfig { nbar: modes.len(), ..config }, weights)?;
        learner.lambdas = modes.iter().map(|m| m.lambda).collect();
        learner.omegas = modes.iter().map(|m| m.omega.clone()).collect();
        learner.w_est = w_cal.clone();
        learner.p_est = p_mat.clone();
        learner.x_est = x_mat.clone();
        learner.fitted = true;
        learner.last_valid = true;
        learner.frozen = true;
        Ok(learner)
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn h_bank(&self) -> &[Mat] {
        &self.h_bank
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn lambdas(&self) -> &[C64] {
        &self.lambdas
    }

    pub fn omegas(&self) -> &[CMat] {
        &self.omegas
    }

    /// Current noise covariance estimate `W_k`.
    pub fn w_est(&self) -> &Mat {
        &self.w_est
    }

    pub fn p_est(&self) -> &Mat {
        &self.p_est
    }

    pub fn x_est(&self) -> &Mat {
        &self.x_est
    }

    /// `U_{k,*}` of the current (or most recent) step.
    pub fn u_star(&self) -> &Mat {
        &self.u_star
    }

    /// Covariance `U_k` of the most recent watermark.
    pub fn u_k(&self) -> &Mat {
        &self.u_k
    }

    pub fn gate(&self) -> bool {
        self.last_valid
    }

    pub fn has_fit(&self) -> bool {
        self.fitted
    }

    /// Exploration variance `delta (k+1)^-beta` at the current step.
    pub fn exploration(&self) -> f64 {
        self.config.delta * ((self.k + 1) as f64).powf(-self.config.beta)
    }

    /// Draws this step's watermark `phi_k = U_k^{1/2} zeta_k`.
    pub fn next_watermark<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vector> {
        let zeta = standard_normal_vector(rng, self.weights.p());
        self.watermark_from_noise(&zeta)
    }

    /// As [`OnlineLearner::next_watermark`] with a given `zeta_k`.
    pub fn watermark_from_noise(&mut self, zeta: &Vector) -> Result<Vector> {
        let p = self.weights.p();
        check_len(zeta, p, "zeta")?;
        if self.pending.is_some() {
            return Err(Error::InvalidParameter(
                "watermark already drawn for this step; call observe first".into(),
            ));
        }
        // Keep the previous optimum if the current X estimate is unusable.
        if let Ok(opt) = optimal_watermark(&self.p_est, &self.x_est, self.config.delta) {
            self.u_star = opt.u_star;
        }
        self.u_k = &self.u_star + Mat::identity(p, p) * self.exploration();
        let phi = psd_sqrt(&self.u_k) * zeta;
        let weighted = Cholesky::new(self.u_k.clone())
            .ok_or_else(|| Error::Singular { what: "U_k".into() })?
            .solve(&phi);
        self.weighted_inputs.push_front(weighted);
        self.weighted_inputs.truncate(self.config.bank_len());
        self.pending = Some(phi.clone());
        Ok(phi)
    }

    /// Consumes the measurement for the watermark drawn this step, updates
    /// every estimate and returns the estimated detection statistic.
    pub fn observe(&mut self, y: &Vector) -> Result<StepOutput> {
        check_len(y, self.weights.m(), "measurement")?;
        let phi = self
            .pending
            .take()
            .ok_or_else(|| Error::InvalidParameter("observe called before next_watermark".into()))?;

        let mut fit = FitStatus::Skipped;
        if !self.frozen {
            self.update_markov(y);
            let first = self.config.bank_len() as u64 - 1;
            if self.k >= first && (self.k - first).is_multiple_of(self.config.fit_every as u64) {
                fit = self.refit();
            }
        }

        let phi_hat = self.update_residual_stats(y, &phi);
        if fit == FitStatus::Accepted {
            self.update_design_estimates()?;
        }
        let g_hat = self.estimate_np_statistic(y, &phi_hat)?;
        let out = StepOutput {
            k: self.k,
            g_hat,
            phi_hat,
            fit,
            gate: self.last_valid,
        };
        self.k += 1;
        Ok(out)
    }

    /// Running-average cross-correlation update of `H_{k,tau}`; entries with
    /// `tau > k` stay at zero.
    fn update_markov(&mut self, y: &Vector) {
        let k = self.k;
        for (tau, h) in self.h_bank.iter_mut().enumerate() {
            if (tau as u64) > k {
                break;
            }
            let g = &self.weighted_inputs[tau];
            let count = (k - tau as u64 + 1) as f64;
            let sample = y * g.transpose();
            *h += (sample - &*h) / count;
        }
    }

    fn refit(&mut self) -> FitStatus {
        let nbar = self.config.nbar;
        let fit = match fit_minimal_polynomial(&self.h_bank, nbar) {
            Ok(f) => f,
            Err(_) => return FitStatus::IllConditioned,
        };
        if !fit.well_conditioned() {
            self.last_valid = false;
            return FitStatus::IllConditioned;
        }
        let (roots, stable) = roots_and_stability(&fit.alpha);
        if !stable {
            self.last_valid = false;
            return FitStatus::NotSchurStable;
        }
        let Some(omegas) = recover_modes(&self.h_bank, &roots) else {
            self.last_valid = false;
            return FitStatus::ClusteredRoots;
        };
        let (roots, omegas) = if self.fitted {
            align_modes(&self.lambdas, roots, omegas)
        } else {
            (roots, omegas)
        };
        self.alpha = fit.alpha;
        self.lambdas = roots;
        self.omegas = omegas;
        project_conjugate_states(&self.lambdas, &mut self.phi_hat_modes);
        self.fitted = true;
        self.last_valid = true;
        FitStatus::Accepted
    }

    /// Modal recursion for the watermark response, noise residual and the
    /// running noise covariance.
    fn update_residual_stats(&mut self, y: &Vector, phi: &Vector) -> Vector {
        let phic = phi.map(|x| C64::new(x, 0.0));
        let m = self.weights.m();
        let mut total = CVector::zeros(m);
        for ((state, lambda), omega) in self
            .phi_hat_modes
            .iter_mut()
            .zip(&self.lambdas)
            .zip(&self.omegas)
        {
            *state = &*state * *lambda + omega * &phic;
            total += &*state;
        }
        debug_assert!(
            total.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
                <= 1e-8 * total.norm().max(1.0),
            "watermark response estimate is not real"
        );
        let phi_hat = total.map(|z| z.re);
        if !self.frozen {
            let residual = y - &phi_hat;
            self.w_acc += &residual * residual.transpose();
            self.w_est = symmetrize(&(&self.w_acc / (self.k + 1) as f64));
        }
        phi_hat
    }

    /// Recomputes `P_k` and `X_k` from the accepted modal model and `W_k`.
    fn update_design_estimates(&mut self) -> Result<()> {
        let w_inv = regularized_inverse(&self.w_est)?;
        self.p_est = modal_gramian(&self.lambdas, &self.omegas, &w_inv);
        self.x_est = modal_x(&self.lambdas, &self.omegas, &self.weights);
        Ok(())
    }

    /// `P` and `X` implied by the current modal model and noise covariance.
    pub fn design_estimates(&self) -> Result<(Mat, Mat)> {
        let w_inv = regularized_inverse(&self.w_est)?;
        Ok((
            modal_gramian(&self.lambdas, &self.omegas, &w_inv),
            modal_x(&self.lambdas, &self.omegas, &self.weights),
        ))
    }

    /// Estimated watermark output covariance `U_k` at the current optimum;
    /// zero before the first accepted fit.
    pub fn output_cov_estimate(&self) -> Mat {
        if self.fitted {
            modal_output_cov(&self.lambdas, &self.omegas, &self.u_star)
        } else {
            let m = self.weights.m();
            Mat::zeros(m, m)
        }
    }

    /// Estimated statistic; before the first accepted fit only the first
    /// quadratic form `(y - phi_hat)^T W^-1 (y - phi_hat)`.
    fn estimate_np_statistic(&self, y: &Vector, phi_hat: &Vector) -> Result<f64> {
        let w = &self.w_est;
        let w_inv = regularized_inverse(w)?;
        if !self.fitted {
            let r = y - phi_hat;
            return Ok(r.dot(&(&w_inv * &r)));
        }
        let uw_inv = regularized_inverse(&(w + self.output_cov_estimate()))?;
        Ok(np_statistic(y, phi_hat, &w_inv, &uw_inv))
    }

    pub fn to_checkpoint(&self) -> LearnerCheckpoint {
        let cm = |m: &CMat| -> Vec<Vec<[f64; 2]>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect()
        };
        LearnerCheckpoint {
            version: CHECKPOINT_VERSION,
            config: self.config,
            k: self.k,
            x_yy: mat_to_rows(self.weights.xyy()),
            x_yphi: mat_to_rows(self.weights.xyphi()),
            x_phiphi: mat_to_rows(self.weights.xphiphi()),
            h_bank: self.h_bank.iter().map(mat_to_rows).collect(),
            alpha: self.alpha.clone(),
            lambdas: self.lambdas.iter().map(|z| [z.re, z.im]).collect(),
            omegas: self.omegas.iter().map(cm).collect(),
            phi_hat_modes: self
                .phi_hat_modes
                .iter()
                .map(|v| v.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
            w_acc: mat_to_rows(&self.w_acc),
            w_est: mat_to_rows(&self.w_est),
            p_est: mat_to_rows(&self.p_est),
            x_est: mat_to_rows(&self.x_est),
            u_star: mat_to_rows(&self.u_star),
            u_k: mat_to_rows(&self.u_k),
            weighted_inputs: self.weighted_inputs.iter().map(|v| v.iter().copied().collect()).collect(),
            pending: self.pending.as_ref().map(|v| v.iter().copied().collect()),
            fitted: self.fitted,
            last_valid: self.last_valid,
            frozen: self.frozen,
        }
    }

    pub fn from_checkpoint(cp: &LearnerCheckpoint) -> Result<Self> {
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: cp.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let weights = LqgWeights::new(
            rows_to_mat(&cp.x_yy, "X_yy")?,
            rows_to_mat(&cp.x_yphi, "X_yphi")?,
            rows_to_mat(&cp.x_phiphi, "X_phiphi")?,
        )?;
        let mut learner = Self::new(cp.config, weights)?;
        let (m, p) = (learner.weights.m(), learner.weights.p());
        let nbar = cp.config.nbar;
        let sized = |rows: &[Vec<f64>], what: &str, shape: (usize, usize)| -> Result<Mat> {
            let mat = if rows.is_empty() { Mat::zeros(0, 0) } else { rows_to_mat(rows, what)? };
            crate::linalg::check_shape(&mat, shape, what)?;
            Ok(mat)
        };
        let complex = |rows: &[Vec<[f64; 2]>], shape: (usize, usize)| -> Result<CMat> {
            if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
                return Err(Error::dims("Omega", shape, (rows.len(), rows.first().map_or(0, Vec::len))));
            }
            Ok(CMat::from_fn(shape.0, shape.1, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
        };
        if cp.h_bank.len() != cp.config.bank_len()
            || cp.alpha.len() != nbar
            || cp.lambdas.len() != nbar
            || cp.omegas.len() != nbar
            || cp.phi_hat_modes.len() != nbar
            || cp.weighted_inputs.len() > cp.config.bank_len()
        {
            return Err(Error::InvalidParameter("checkpoint bank sizes do not match nbar".into()));
        }
        learner.k = cp.k;
        learner.h_bank = cp
            .h_bank
            .iter()
            .map(|h| sized(h, "H", (m, p)))
            .collect::<Result<_>>()?;
        learner.alpha = cp.alpha.clone();
        learner.lambdas = cp.lambdas.iter().map(|z| C64::new(z[0], z[1])).collect();
        learner.omegas = cp.omegas.iter().map(|o| complex(o, (m, p))).collect::<Result<_>>()?;
        learner.phi_hat_modes = cp
            .phi_hat_modes
            .iter()
            .map(|v| {
                if v.len() != m {
                    return Err(Error::dims("phi_hat mode", (m, 1), (v.len(), 1)));
                }
                Ok(CVector::from_iterator(m, v.iter().map(|z| C64::new(z[0], z[1]))))
            })
            .collect::<Result<_>>()?;
        learner.w_acc = sized(&cp.w_acc, "W_acc", (m, m))?;
        learner.w_est = sized(&cp.w_est, "W_k", (m, m))?;
        learner.p_est = sized(&cp.p_est, "P_k", (p, p))?;
        learner.x_est = sized(&cp.x_est, "X_k", (p, p))?;
        learner.u_star = sized(&cp.u_star, "U_star", (p, p))?;
        learner.u_k = sized(&cp.u_k, "U_k", (p, p))?;
        learner.weighted_inputs = cp
            .weighted_inputs
            .iter()
            .map(|v| {
                if v.len() != p {
                    return Err(Error::dims("weighted input", (p, 1), (v.len(), 1)));
                }
                Ok(Vector::from_vec(v.clone()))
            })
            .collect::<Result<_>>()?;
        learner.pending = match &cp.pending {
            Some(v) if v.len() == p => Some(Vector::from_vec(v.clone())),
            Some(v) => return Err(Error::dims("pending watermark", (p, 1), (v.len(), 1))),
            None => None,
        };
        learner.fitted = cp.fitted;
        learner.last_valid = cp.last_valid;
        learner.frozen = cp.frozen;
        Ok(learner)
    }
}

/// Makes the per-mode response states conjugate-symmetric with respect to
/// the current roots: real for real roots, conjugate for conjugate pairs.
fn project_conjugate_states(lambdas: &[C64], states: &mut [CVector]) {
    let mut done = vec![false; lambdas.len()];
    for i in 0..lambdas.len() {
        if done[i] {
            continue;
        }
        done[i] = true;
        if lambdas[i].im == 0.0 {
            states[i].apply(|z| *z = C64::new(z.re, 0.0));
            continue;
        }
        let partner = (0..lambdas.len()).find(|&j| !done[j] && lambdas[j] == lambdas[i].conj());
        if let Some(j) = partner {
            done[j] = true;
            let avg = (&states[i] + states[j].conjugate()) * C64::new(0.5, 0.0);
            states[j] = avg.conjugate();
            states[i] = avg;
        }
    }
}

/// Reorders freshly fitted modes so each lines up with the nearest root of
/// the previous fit; the per-mode response recursion depends on the order.
fn align_modes(previous: &[C64], roots: Vec<C64>, omegas: Vec<CMat>) -> (Vec<C64>, Vec<CMat>) {
    let n = roots.len();
    if previous.len() != n {
        return (roots, omegas);
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, p) in previous.iter().enumerate() {
        for (j, r) in roots.iter().enumerate() {
            pairs.push(((p - r).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut slot_of_new = vec![usize::MAX; n];
    let mut slot_taken = vec![false; n];
    for (_, i, j) in pairs {
        if !slot_taken[i] && slot_of_new[j] == usize::MAX {
            slot_taken[i] = true;
            slot_of_new[j] = i;
        }
    }
    let mut new_roots = vec![C64::new(0.0, 0.0); n];
    let mut new_omegas: Vec<CMat> = vec![CMat::zeros(0, 0); n];
    for (j, (r, o)) in roots.into_iter().zip(omegas).enumerate() {
        new_roots[slot_of_new[j]] = r;
        new_omegas[slot_of_new[j]] = o;
    }
    (new_roots, new_omegas)
}

/// Versioned JSON form of [`OnlineLearner`]. Matrices are row-major nested
/// arrays, complex numbers `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerCheckpoint {
    pub version: u32,
    pub config: LearnerConfig,
    pub k: u64,
    pub x_yy: Vec<Vec<f64>>,
    pub x_yphi: Vec<Vec<f64>>,
    pub x_phiphi: Vec<Vec<f64>>,
    pub h_bank: Vec<Vec<Vec<f64>>>,
    pub alpha: Vec<f64>,
    pub lambdas: Vec<[f64; 2]>,
    pub omegas: Vec<Vec<Vec<[f64; 2]>>>,
    pub phi_hat_modes: Vec<Vec<[f64; 2]>>,
    pub w_acc: Vec<Vec<f64>>,
    pub w_est: Vec<Vec<f64>>,
    pub p_est: Vec<Vec<f64>>,
    pub x_est: Vec<Vec<f64>>,
    pub u_star: Vec<Vec<f64>>,
    pub u_k: Vec<Vec<f64>>,
    pub weighted_inputs: Vec<Vec<f64>>,
    pub pending: Option<Vec<f64>>,
    pub fitted: bool,
    pub last_valid: bool,
    pub frozen: bool,
}

impl LearnerCheckpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_bank(lambdas: &[C64], omegas: &[CMat], len: usize) -> Vec<Mat> {
        (0..len)
            .map(|tau| {
                let mut h = CMat::zeros(omegas[0].nrows(), omegas[0].ncols());
                for (l, o) in lambdas.iter().zip(omegas) {
                    h += o * l.powu(tau as u32);
                }
                h.map(|z| z.re)
            })
            .collect()
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn scalar(v: f64) -> CMat {
        CMat::from_element(1, 1, c(v))
    }

    #[test]
    fn fit_single_mode() {
        let bank = exact_bank(&[c(0.5)], &[scalar(1.0)], 2);
        let fit = fit_minimal_polynomial(&bank, 1).unwrap();
        assert!((fit.alpha[0] + 0.5).abs() < 1e-14);
        assert!(fit.well_conditioned());
    }

    #[test]
    fn fit_two_modes() {
        let bank = exact_bank(&[c(0.5), c(-0.25)], &[scalar(1.0), scalar(2.0)], 5);
        let fit = fit_minimal_polynomial(&bank, 2).unwrap();
        assert!((fit.alpha[0] + 0.125).abs() < 1e-12);
        assert!((fit.alpha[1] + 0.25).abs() < 1e-12);
    }

    #[test]
    fn fit_zero_bank_is_ill_conditioned() {
        let bank = vec![Mat::zeros(2, 1); 5];
        let fit = fit_minimal_polynomial(&bank, 2).unwrap();
        assert!(!fit.well_conditioned());
    }

    #[test]
    fn fit_needs_enough_parameters() {
        assert!(fit_minimal_polynomial(&vec![Mat::zeros(1, 1); 4], 2).is_err());
    }

    #[test]
    fn roots_cases() {
        let (r, stable) = roots_and_stability(&[-0.125, -0.25]);
        assert!(stable);
        assert!((r[0] - c(-0.25)).norm() < 1e-14);
        assert!((r[1] - c(0.5)).norm() < 1e-14);

        let (r, stable) = roots_and_stability(&[-1.21, 0.0]);
        assert!(!stable);
        assert!(r.iter().any(|l| (l - c(1.1)).norm() < 1e-12));

        let (r, stable) = roots_and_stability(&[0.0, 0.0, 0.0]);
        assert!(stable);
        assert!(r.iter().all(|l| l.norm() < 1e-12));
    }

    #[test]
    fn roots_complex_pair_is_conjugate() {
        // (x - 0.5 e^{i pi/4})(x - 0.5 e^{-i pi/4}) = x^2 - 0.5 sqrt2 x + 0.25
        let (r, stable) = roots_and_stability(&[0.25, -0.5 * 2f64.sqrt()]);
        assert!(stable);
        assert_eq!(r[0], r[1].conj());
        assert!((r[0].norm() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn recover_two_real_modes() {
        let lambdas = [c(0.5), c(-0.25)];
        let omegas = [scalar(1.0), scalar(2.0)];
        let bank = exact_bank(&lambdas, &omegas, 5);
        let rec = recover_modes(&bank, &lambdas).unwrap();
        assert!((&rec[0] - &omegas[0]).norm() < 1e-10);
        assert!((&rec[1] - &omegas[1]).norm() < 1e-10);
    }

    #[test]
    fn recover_single_mode_at_zero() {
        let bank = vec![Mat::from_element(1, 1, 3.0), Mat::zeros(1, 1)];
        let rec = recover_modes(&bank, &[c(0.0)]).unwrap();
        assert!((rec[0][(0, 0)] - c(3.0)).norm() < 1e-14);
    }

    #[test]
    fn recover_complex_pair() {
        let l = C64::from_polar(0.5, std::f64::consts::FRAC_PI_4);
        let lambdas = [l, l.conj()];
        let om = CMat::from_row_slice(1, 2, &[C64::new(1.0, 0.5), C64::new(-0.3, 2.0)]);
        let omegas = [om.clone(), om.map(|z| z.conj())];
        let bank = exact_bank(&lambdas, &omegas, 5);
        let rec = recover_modes(&bank, &lambdas).unwrap();
        assert!((&rec[0] - &omegas[0]).norm() < 1e-10);
        assert_eq!(rec[1], rec[0].map(|z| z.conj()));
        for tau in 0..20 {
            let mut h = CMat::zeros(1, 2);
            for (l, o) in lambdas.iter().zip(&rec) {
                h += o * l.powu(tau);
            }
            assert!(h.iter().all(|z| z.im.abs() < 1e-14));
        }
    }

    #[test]
    fn recover_rejects_clustered_roots() {
        let bank = vec![Mat::zeros(1, 1); 5];
        assert!(recover_modes(&bank, &[c(0.5), c(0.5 + 1e-12)]).is_none());
    }

    #[test]
    fn modal_sums_match_scalar_closed_form() {
        let lambdas = [c(0.5)];
        let omegas = [scalar(1.0)];
        let w_inv = Mat::from_element(1, 1, 3.0 / 7.0);
        let p = modal_gramian(&lambdas, &omegas, &w_inv);
        assert!((p[(0, 0)] - 4.0 / 7.0).abs() < 1e-14);
        let x = modal_x(&lambdas, &omegas, &LqgWeights::identity(1, 1));
        assert!((x[(0, 0)] - 7.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn modal_sums_of_zero_residues() {
        let lambdas = [c(0.5), c(0.2)];
        let omegas = [CMat::zeros(2, 2), CMat::zeros(2, 2)];
        let weights = LqgWeights::new(Mat::identity(2, 2), Mat::zeros(2, 2), Mat::identity(2, 2) * 2.0).unwrap();
        assert_eq!(modal_gramian(&lambdas, &omegas, &Mat::identity(2, 2)).norm(), 0.0);
        assert_eq!(modal_x(&lambdas, &omegas, &weights), weights.xphiphi().clone());
    }

    #[test]
    fn config_validation() {
        let w = LqgWeights::identity(1, 1);
        assert!(OnlineLearner::new(LearnerConfig::new(1, 0.0, 1.0), w.clone()).is_err());
        assert!(OnlineLearner::new(LearnerConfig::new(1, 1.0, 1.0), w.clone()).is_err());
        assert!(OnlineLearner::new(LearnerConfig::new(0, 0.5, 1.0), w.clone()).is_err());
        assert!(OnlineLearner::new(LearnerConfig::new(1, 0.5, 0.0), w.clone()).is_err());
        let learner = OnlineLearner::new(LearnerConfig::new(2, 0.5, 1.0), w).unwrap();
        assert_eq!(learner.h_bank().len(), 5);
        assert_eq!(learner.p_est(), &Mat::identity(1, 1));
    }

    #[test]
    fn first_watermark_isotropic_tie_break() {
        let mut learner = OnlineLearner::new(LearnerConfig::new(1, 1.0 / 3.0, 1.0), LqgWeights::identity(2, 2)).unwrap();
        let zeta = Vector::from_vec(vec![0.3, -1.2]);
        let phi = learner.watermark_from_noise(&zeta).unwrap();
        let mut e1 = Mat::zeros(2, 2);
        e1[(0, 0)] = 1.0;
        assert!((learner.u_star() - &e1).norm() < 1e-14);
        // U_0 = U_{0,*} + delta I
        assert!((learner.u_k() - (&e1 + Mat::identity(2, 2))).norm() < 1e-14);
        assert!((phi - psd_sqrt(learner.u_k()) * zeta).norm() < 1e-14);
    }

    #[test]
    fn exploration_schedule() {
        let mut learner = OnlineLearner::new(LearnerConfig::new(1, 1.0 / 3.0, 1.0), LqgWeights::identity(1, 1)).unwrap();
        for _ in 0..7 {
            learner.watermark_from_noise(&Vector::from_element(1, 0.0)).unwrap();
            learner.observe(&Vector::from_element(1, 0.0)).unwrap();
        }
        assert_eq!(learner.k(), 7);
        assert!((learner.exploration() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn observe_requires_watermark() {
        let mut learner = OnlineLearner::new(LearnerConfig::new(1, 0.5, 1.0), LqgWeights::identity(1, 1)).unwrap();
        assert!(learner.observe(&Vector::zeros(1)).is_err());
        learner.watermark_from_noise(&Vector::zeros(1)).unwrap();
        assert!(learner.watermark_from_noise(&Vector::zeros(1)).is_err());
    }

    #[test]
    fn first_markov_estimate_is_single_term() {
        let mut learner = OnlineLearner::new(LearnerConfig::new(1, 0.5, 1.0), LqgWeights::identity(1, 1)).unwrap();
        let phi = learner.watermark_from_noise(&Vector::from_element(1, 0.8)).unwrap();
        let u0 = learner.u_k()[(0, 0)];
        let y = Vector::from_element(1, 1.7);
        learner.observe(&y).unwrap();
        assert!((learner.h_bank()[0][(0, 0)] - 1.7 * phi[0] / u0).abs() < 1e-14);
        assert_eq!(learner.h_bank()[1][(0, 0)], 0.0);
    }

    #[test]
    fn residual_stats_without_watermark_response() {
        let mut learner = OnlineLearner::new(LearnerConfig::new(1, 0.5, 1.0), LqgWeights::identity(2, 1)).unwrap();
        learner.watermark_from_noise(&Vector::from_element(1, 0.4)).unwrap();
        let y = Vector::from_vec(vec![1.0, -2.0]);
        let out = learner.observe(&y).unwrap();
        assert_eq!(out.phi_hat.norm(), 0.0);
        assert!((learner.w_est() - &y * y.transpose()).norm() < 1e-15);
        // before any fit only the first quadratic form is reported
        let w_inv = regularized_inverse(learner.w_est()).unwrap();
        assert!((out.g_hat - y.dot(&(w_inv * &y))).abs() < 1e-9);
    }

    #[test]
    fn mode_alignment_follows_previous_order() {
        let prev = [c(0.5), c(-0.3)];
        let (r, o) = align_modes(&prev, vec![c(-0.29), c(0.51)], vec![scalar(1.0), scalar(2.0)]);
        assert_eq!(r, vec![c(0.51), c(-0.29)]);
        assert_eq!(o[0], scalar(2.0));
    }
}
