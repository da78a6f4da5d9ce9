//! Neyman-Pearson replay detector for a known plant.
//!
//! Under normal operation `y_k ~ N(phi_k, W)` where `phi_k` is the output
//! response to the watermark; a replayed output looks like `N(0, W + U)`.
//! The log-likelihood ratio reduces to
//!
//! ```text
//! g_k = (y_k - phi_k)^T W^{-1} (y_k - phi_k) - y_k^T (W + U)^{-1} y_k
//! ```
//!
//! and an alarm is raised when `g_k >= eta`.

use crate::design::WatermarkDesign;
use crate::error::{Error, Result};
use crate::linalg::{check_len, psd_sqrt, spd_inverse, Mat, Vector};
use crate::model::{standard_normal_vector, PlantModel, SimState};
use crate::rng::{stream, Role};

/// Incremental convolution `phi_k = sum_tau H_tau phi_{k-tau}` kept as the
/// state of a copy of the plant driven only by the watermark.
#[derive(Debug, Clone)]
pub struct WatermarkResponse {
    a: Mat,
    b: Mat,
    c: Mat,
    state: Vector,
}

impl WatermarkResponse {
    pub fn new(model: &PlantModel) -> Self {
        Self {
            a: model.a().clone(),
            b: model.b().clone(),
            c: model.c().clone(),
            state: Vector::zeros(model.n()),
        }
    }

    /// Feeds the watermark applied at the current step and returns its
    /// accumulated output response.
    pub fn push(&mut self, phi: &Vector) -> Vector {
        self.state = &self.a * &self.state + &self.b * phi;
        &self.c * &self.state
    }
}

pub fn np_statistic(y: &Vector, phi: &Vector, w_inv: &Mat, uw_inv: &Mat) -> f64 {
    let r = y - phi;
    r.dot(&(w_inv * &r)) - y.dot(&(uw_inv * y))
}

/// Alarm iff `g >= eta`.
pub fn decide(g: f64, eta: f64) -> bool {
    g >= eta
}

#[derive(Debug, Clone)]
pub struct DetectorContext {
    w_inv: Mat,
    uw_inv: Mat,
    threshold: f64,
    response: WatermarkResponse,
}

impl DetectorContext {
    pub fn new(model: &PlantModel, design: &WatermarkDesign, threshold: f64) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(Error::InvalidParameter(format!("threshold {threshold} must be finite")));
        }
        Ok(Self {
            w_inv: spd_inverse(&design.w_cal, "W")?,
            uw_inv: spd_inverse(&(&design.w_cal + &design.u_cal), "W + U")?,
            threshold,
            response: WatermarkResponse::new(model),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn w_inv(&self) -> &Mat {
        &self.w_inv
    }

    pub fn uw_inv(&self) -> &Mat {
        &self.uw_inv
    }

    /// Advances the watermark response with the watermark applied at this
    /// step and returns `g_k` for the delivered output `y`.
    pub fn statistic(&mut self, y: &Vector, applied: &Vector) -> Result<f64> {
        check_len(y, self.w_inv.nrows(), "measurement")?;
        check_len(applied, self.response.b.ncols(), "watermark")?;
        let phi = self.response.push(applied);
        Ok(np_statistic(y, &phi, &self.w_inv, &self.uw_inv))
    }

    pub fn alarm(&self, g: f64) -> bool {
        decide(g, self.threshold)
    }
}

/// Steps discarded before sampling so the watermark response reaches its
/// stationary covariance.
fn warmup_steps(model: &PlantModel) -> usize {
    let rho = model.spectral_radius();
    if rho <= 0.0 {
        return 1;
    }
    let steps = (1e-6f64.ln() / (2.0 * rho.ln())).ceil();
    steps.clamp(1.0, 10_000.0) as usize
}

/// Constant threshold with the requested false-alarm rate, estimated as the
/// `1 - target_far` empirical quantile of `g` over `samples` steps of a
/// no-attack simulation watermarked with `N(0, U*)`.
pub fn calibrate_threshold(
    model: &PlantModel,
    design: &WatermarkDesign,
    target_far: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if !(target_far > 0.0 && target_far < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "false-alarm rate {target_far} must lie in (0, 1)"
        )));
    }
    if samples < 1000 {
        return Err(Error::InvalidParameter(format!(
            "calibration needs at least 1000 samples, got {samples}"
        )));
    }
    let mut sim = SimState::new(
        model,
        stream(seed, Role::ProcessNoise),
        stream(seed, Role::MeasurementNoise),
    )?;
    let mut zeta_rng = stream(seed, Role::Watermark);
    let root = psd_sqrt(&design.u_star);
    let mut ctx = DetectorContext::new(model, design, 0.0)?;
    let warmup = warmup_steps(model);
    let mut values = Vec::with_capacity(samples);
    for k in 0..warmup + samples {
        let phi = &root * standard_normal_vector(&mut zeta_rng, model.p());
        let y = sim.step(model, &phi)?;
        let g = ctx.statistic(&y, &phi)?;
        if k >= warmup {
            values.push(g);
        }
    }
    Ok(upper_quantile(&mut values, target_far))
}

/// Smallest sample value with at most a `tail` fraction of samples above it.
pub fn upper_quantile(values: &mut [f64], tail: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let rank = ((1.0 - tail) * n as f64).ceil() as usize;
    values[rank.saturating_sub(1).min(n - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{Budget, LqgWeights};

    fn m1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn scalar_model() -> PlantModel {
        PlantModel::new(m1(0.5), m1(1.0), m1(1.0), m1(1.0), m1(1.0)).unwrap()
    }

    #[test]
    fn response_cases() {
        let model = scalar_model();
        let mut r = WatermarkResponse::new(&model);
        assert_eq!(r.push(&Vector::zeros(1))[0], 0.0);
        let mut r = WatermarkResponse::new(&model);
        assert_eq!(r.push(&Vector::from_element(1, 1.0))[0], 1.0);
        assert!((r.push(&Vector::from_element(1, 1.0))[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn statistic_values() {
        let i = Mat::identity(1, 1);
        let half = m1(0.5);
        let z = Vector::zeros(1);
        assert_eq!(np_statistic(&z, &z, &i, &half), 0.0);
        let two = Vector::from_element(1, 2.0);
        assert!((np_statistic(&two, &two, &i, &half) + 2.0).abs() < 1e-15);
        assert!((np_statistic(&two, &z, &i, &half) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn decision_boundary() {
        assert!(decide(1.5, 1.5));
        assert!(!decide(1.5 - 1e-12, 1.5));
        assert!(decide(f64::INFINITY, 1e300));
    }

    #[test]
    fn quantile_boundaries() {
        let mut v: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(upper_quantile(&mut v, 0.05), 94.0);
        assert_eq!(upper_quantile(&mut v, 1.0 - 1e-9), 0.0);
        assert_eq!(upper_quantile(&mut v, 1e-9), 99.0);
    }

    #[test]
    fn calibration_argument_checks() {
        let model = scalar_model();
        let design = WatermarkDesign::new(&model, &LqgWeights::identity(1, 1), Budget::Absolute(1.0)).unwrap();
        assert!(calibrate_threshold(&model, &design, 0.0, 5000, 1).is_err());
        assert!(calibrate_threshold(&model, &design, 1.0, 5000, 1).is_err());
        assert!(calibrate_threshold(&model, &design, 0.05, 999, 1).is_err());
    }

    #[test]
    fn calibration_is_deterministic_and_finite_without_watermark() {
        let model = scalar_model();
        let mut design = WatermarkDesign::new(&model, &LqgWeights::identity(1, 1), Budget::Absolute(1.0)).unwrap();
        design.u_star = m1(0.0);
        design.u_cal = m1(0.0);
        let a = calibrate_threshold(&model, &design, 0.05, 2000, 9).unwrap();
        let b = calibrate_threshold(&model, &design, 0.05, 2000, 9).unwrap();
        assert!(a.is_finite());
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn near_one_far_gives_minimum() {
        let model = scalar_model();
        let design = WatermarkDesign::new(&model, &LqgWeights::identity(1, 1), Budget::Absolute(1.0)).unwrap();
        let eta = calibrate_threshold(&model, &design, 1.0 - 1e-9, 1000, 3).unwrap();
        let eta_low = calibrate_threshold(&model, &design, 0.999, 1000, 3).unwrap();
        assert!(eta <= eta_low);
    }
}
