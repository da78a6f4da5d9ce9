//! Reproducible experiments: random plants, offline design reports, the
//! online closed loop with an optional replay attack, per-step traces and
//! summary metrics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::attack::{ReplayChannel, ReplaySchedule};
use crate::design::{kl_bounds, Budget, LqgWeights, WatermarkDesign};
use crate::detector::{upper_quantile, DetectorContext};
use crate::error::{Error, Result};
use crate::learner::{LearnerConfig, OnlineLearner};
use crate::linalg::{mat_to_rows, Mat, Vector};
use crate::model::{PlantModel, SimState};
use crate::rng::{stream, Role};

const GENERATION_RETRIES: usize = 100;
const EIGEN_GAP: f64 = 1e-6;
/// Default start of the log-log slope fit.
pub const SLOPE_START: u64 = 1000;

/// Random plant with i.i.d. standard normal `A`, `B`, `C`, `A` rescaled to
/// spectral radius `rho`, and `Q = R = I`. Redraws until the plant is
/// minimal, has pairwise eigenvalue gaps above `1e-6` and distinct moduli
/// apart from conjugate pairs.
pub fn generate_random_system(seed: u64, n: usize, m: usize, p: usize, rho: f64) -> Result<PlantModel> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!("target spectral radius {rho} must lie in (0, 1)")));
    }
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidParameter("dimensions must be positive".into()));
    }
    let mut rng = stream(seed, Role::SystemGeneration);
    let mut draw = |r: usize, c: usize| Mat::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    for _ in 0..GENERATION_RETRIES {
        let a = draw(n, n);
        let b = draw(n, p);
        let c = draw(m, n);
        let radius = crate::linalg::spectral_radius(&a);
        if radius <= 0.0 || !radius.is_finite() {
            continue;
        }
        let a = a * (rho / radius);
        if !well_separated(&a) {
            continue;
        }
        if let Ok(model) = PlantModel::new(a, b, c, Mat::identity(n, n), Mat::identity(m, m)) {
            return Ok(model);
        }
    }
    Err(Error::RetriesExhausted { attempts: GENERATION_RETRIES })
}

fn well_separated(a: &Mat) -> bool {
    let eig: Vec<_> = crate::linalg::eigenvalues(a);
    for (i, li) in eig.iter().enumerate() {
        for lj in &eig[i + 1..] {
            if (li - lj).norm() <= EIGEN_GAP {
                return false;
            }
            let conjugate = (li - lj.conj()).norm() <= EIGEN_GAP;
            if !conjugate && (li.norm() - lj.norm()).abs() <= EIGEN_GAP {
                return false;
            }
        }
    }
    true
}

/// JSON report of the offline design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub delta: f64,
    pub j0: f64,
    pub delta_j: f64,
    pub lambda_max: f64,
    pub degenerate: bool,
    pub expected_kl: f64,
    pub kl_lower: f64,
    pub kl_upper: f64,
    pub p: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub u_star: Vec<Vec<f64>>,
    pub u_output: Vec<Vec<f64>>,
    pub z: Vec<f64>,
}

pub fn run_offline_design(model: &PlantModel, weights: &LqgWeights, budget: Budget) -> Result<DesignReport> {
    let design = WatermarkDesign::new(model, weights, budget)?;
    let (kl_lower, kl_upper) = kl_bounds(&design.u_cal, &design.w_cal)?;
    Ok(DesignReport {
        delta: design.delta,
        j0: design.j0,
        delta_j: (&design.u_star * &design.x_mat).trace(),
        lambda_max: design.lambda_max,
        degenerate: design.degenerate,
        expected_kl: design.expected_kl()?,
        kl_lower,
        kl_upper,
        p: mat_to_rows(&design.p_mat),
        x: mat_to_rows(&design.x_mat),
        w: mat_to_rows(&design.w_cal),
        u_star: mat_to_rows(&design.u_star),
        u_output: mat_to_rows(&design.u_cal),
        z: design.z.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    File(PathBuf),
    Random { n: usize, m: usize, p: usize, rho: f64 },
    Given(Box<PlantModel>),
}

impl ModelSource {
    /// Random plants are drawn from `seed`'s system-generation stream.
    pub fn resolve(&self, seed: u64) -> Result<PlantModel> {
        match self {
            ModelSource::File(path) => PlantModel::load(path),
            ModelSource::Random { n, m, p, rho } => generate_random_system(seed, *n, *m, *p, *rho),
            ModelSource::Given(model) => Ok((**model).clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub steps: u64,
    pub model: ModelSource,
    /// Defaults to the state dimension.
    pub nbar: Option<usize>,
    pub beta: f64,
    pub budget: Budget,
    pub attack: Option<ReplaySchedule>,
    pub fit_every: usize,
    /// Target false-alarm rate for the online detector threshold.
    pub far: f64,
    /// Replace the watermark by zero (no identification, no detection).
    pub no_watermark: bool,
}

impl ExperimentConfig {
    pub fn new(seed: u64, steps: u64, model: ModelSource) -> Self {
        Self {
            seed,
            steps,
            model,
            nbar: None,
            beta: 1.0 / 3.0,
            budget: Budget::FractionOfJ0(0.1),
            attack: None,
            fit_every: 1,
            far: 0.05,
            no_watermark: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidParameter(format!("beta {} must lie in (0, 1)", self.beta)));
        }
        if let Budget::FractionOfJ0(f) = self.budget {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParameter(format!("budget fraction {f} must lie in (0, 1]")));
            }
        }
        if !(self.far > 0.0 && self.far < 1.0) {
            return Err(Error::InvalidParameter(format!("false-alarm rate {} must lie in (0, 1)", self.far)));
        }
        if self.fit_every == 0 {
            return Err(Error::InvalidParameter("fit_every must be at least 1".into()));
        }
        if self.nbar == Some(0) {
            return Err(Error::InvalidParameter("nbar must be at least 1".into()));
        }
        Ok(())
    }
}

/// One row of the per-step trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: u64,
    /// Statistic of the detector that knows the plant.
    pub g: f64,
    /// Statistic estimated by the learner.
    pub g_hat: f64,
    #[serde(with = "bool_int")]
    pub alarm: bool,
    #[serde(rename = "rel_err_U")]
    pub rel_err_u: f64,
    /// LQG cost increase `tr(X U_k)` of this step's watermark.
    pub delta_j: f64,
    #[serde(with = "bool_int")]
    pub gate: bool,
}

mod bool_int {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!("expected 0 or 1, got {other}"))),
        }
    }
}

/// Reads `null` as NaN so that metrics survive a JSON round trip.
fn nan_if_null<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Metrics recomputable from a trace. Undefined values are NaN (`null` in
/// JSON).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Metrics {
    pub rows: u64,
    #[serde(deserialize_with = "nan_if_null")]
    pub final_rel_err_u: f64,
    /// Least-squares slope of `ln rel_err_U` against `ln k` over
    /// `k >= slope_start`.
    #[serde(deserialize_with = "nan_if_null")]
    pub slope: f64,
    /// Alarm rate inside the replay window.
    #[serde(deserialize_with = "nan_if_null")]
    pub detection_power: f64,
    /// Alarm rate before recording starts (all rows without an attack).
    #[serde(deserialize_with = "nan_if_null")]
    pub false_alarm_rate: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub g_hat_replay_mean: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub g_hat_pre_p99: f64,
    /// Fraction of rows whose modal model came from a Schur-stable fit.
    #[serde(deserialize_with = "nan_if_null")]
    pub gate_fraction: f64,
}

impl Metrics {
    /// Equality up to `tol`, with NaN equal to NaN.
    pub fn approx_eq(&self, other: &Metrics, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a.is_nan() && b.is_nan()) || (a - b).abs() <= tol;
        self.rows == other.rows
            && close(self.final_rel_err_u, other.final_rel_err_u)
            && close(self.slope, other.slope)
            && close(self.detection_power, other.detection_power)
            && close(self.false_alarm_rate, other.false_alarm_rate)
            && close(self.g_hat_replay_mean, other.g_hat_replay_mean)
            && close(self.g_hat_pre_p99, other.g_hat_pre_p99)
            && close(self.gate_fraction, other.gate_fraction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub attack: Option<ReplaySchedule>,
    pub slope_start: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            attack: None,
            slope_start: SLOPE_START,
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn rate(flags: impl Iterator<Item = bool>) -> f64 {
    let (hits, total) = flags.fold((0u64, 0u64), |(h, t), f| (h + u64::from(f), t + 1));
    if total == 0 {
        f64::NAN
    } else {
        hits as f64 / total as f64
    }
}

/// Least-squares slope of `ln y` on `ln x` over positive finite pairs.
pub fn loglog_slope(points: impl Iterator<Item = (f64, f64)>) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .filter(|&(x, y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        f64::NAN
    } else {
        sxy / sxx
    }
}

fn pre_attack(k: u64, attack: Option<&ReplaySchedule>) -> bool {
    attack.is_none_or(|s| k < s.k1())
}

pub fn compute_metrics(records: &[TraceRecord], opts: &EvalOptions) -> Metrics {
    let attack = opts.attack.as_ref();
    let pre: Vec<&TraceRecord> = records.iter().filter(|r| pre_attack(r.k, attack)).collect();
    let replay: Vec<&TraceRecord> = match attack {
        Some(s) => records.iter().filter(|r| s.replaying(r.k)).collect(),
        None => Vec::new(),
    };
    let mut pre_g: Vec<f64> = pre.iter().map(|r| r.g_hat).collect();
    Metrics {
        rows: records.len() as u64,
        final_rel_err_u: records.last().map_or(f64::NAN, |r| r.rel_err_u),
        slope: loglog_slope(
            records
                .iter()
                .filter(|r| r.k >= opts.slope_start)
                .map(|r| (r.k as f64, r.rel_err_u)),
        ),
        detection_power: rate(replay.iter().map(|r| r.alarm)),
        false_alarm_rate: rate(pre.iter().map(|r| r.alarm)),
        g_hat_replay_mean: mean(&replay.iter().map(|r| r.g_hat).collect::<Vec<_>>()),
        g_hat_pre_p99: if pre_g.is_empty() {
            f64::NAN
        } else {
            upper_quantile(&mut pre_g, 0.01)
        },
        gate_fraction: rate(records.iter().map(|r| r.gate)),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub steps: u64,
    pub nbar: usize,
    pub beta: f64,
    pub fit_every: usize,
    pub delta: f64,
    pub j0: f64,
    pub target_far: f64,
    /// Threshold on the estimated statistic.
    #[serde(deserialize_with = "nan_if_null")]
    pub threshold: f64,
    pub attack: Option<ReplaySchedule>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub model: PlantModel,
    pub records: Vec<TraceRecord>,
    pub summary: RunSummary,
}

impl ExperimentResult {
    /// Writes `trace.csv`, `summary.json` and `model.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = TraceWriter::create(&dir.join("trace.csv"))?;
        for r in &self.records {
            w.push(r)?;
        }
        w.finish()?;
        write_json(&dir.join("summary.json"), &self.summary)?;
        self.model.save(dir.join("model.json"))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Streaming CSV trace writer.
pub struct TraceWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(BufWriter::new(File::create(path)?));
        inner.write_record(TRACE_HEADER)?;
        Ok(Self { inner })
    }

    pub fn push(&mut self, r: &TraceRecord) -> Result<()> {
        Ok(self.inner.serialize(r)?)
    }

    pub fn finish(mut self) -> Result<()> {
        Ok(self.inner.flush()?)
    }
}

pub const TRACE_HEADER: [&str; 7] = ["k", "g", "g_hat", "alarm", "rel_err_U", "delta_j", "gate"];

/// Parses a trace written by [`TraceWriter`]. Errors carry the 1-based line
/// number.
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.is_empty() || header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", TRACE_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<TraceRecord>().enumerate() {
        let record = row.map_err(|e| Error::Parse {
            line: e.position().map_or(i + 2, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn evaluate_trace(path: &Path, opts: &EvalOptions) -> Result<Metrics> {
    Ok(compute_metrics(&read_trace(path)?, opts))
}

/// One pass of the closed loop. `threshold` may be infinite (no alarms).
fn simulate_loop(
    model: &PlantModel,
    design: &WatermarkDesign,
    config: &ExperimentConfig,
    seed: u64,
    attack: Option<ReplaySchedule>,
    threshold: f64,
    sink: &mut dyn FnMut(TraceRecord) -> Result<()>,
) -> Result<()> {
    let weights = LqgWeights::identity(model.m(), model.p());
    let nbar = config.nbar.unwrap_or(model.n());
    let mut learner_config = LearnerConfig::new(nbar, config.beta, design.delta);
    learner_config.fit_every = config.fit_every;
    let mut learner = OnlineLearner::new(learner_config, weights)?;
    let mut sim = SimState::new(model, stream(seed, Role::ProcessNoise), stream(seed, Role::MeasurementNoise))?;
    let mut zeta_rng = stream(seed, Role::Watermark);
    let mut channel = attack.map(ReplayChannel::new);
    let mut detector = DetectorContext::new(model, design, 0.0)?;
    let u_norm = design.u_star.norm();

    for k in 0..config.steps {
        let mut phi = learner.next_watermark(&mut zeta_rng)?;
        if config.no_watermark {
            phi.fill(0.0);
        }
        let y_true = sim.step(model, &phi)?;
        let y = match channel.as_mut() {
            Some(ch) => ch.transmit(k, &y_true)?,
            None => y_true,
        };
        let g = detector.statistic(&y, &phi)?;
        let out = learner.observe(&y)?;
        let rel_err_u = if u_norm > 0.0 {
            (learner.u_star() - &design.u_star).norm() / u_norm
        } else {
            learner.u_star().norm()
        };
        sink(TraceRecord {
            k,
            g,
            g_hat: out.g_hat,
            alarm: out.g_hat >= threshold,
            rel_err_u,
            delta_j: (learner.u_k() * &design.x_mat).trace(),
            gate: out.gate,
        })?;
    }
    Ok(())
}

/// Threshold on the estimated statistic: the `1 - far` quantile of
/// `g_hat` over the pre-attack steps of an attack-free replica run driven
/// by independent noise.
fn calibrate_online_threshold(
    model: &PlantModel,
    design: &WatermarkDesign,
    config: &ExperimentConfig,
) -> Result<f64> {
    let window = match config.attack {
        Some(s) if s.k1() > 0 => s.k1().min(config.steps),
        _ => config.steps,
    };
    if window == 0 {
        return Ok(f64::INFINITY);
    }
    let replica_seed = stream(config.seed, Role::Calibration).next_u64();
    let replica = ExperimentConfig {
        steps: window,
        ..config.clone()
    };
    let mut values = Vec::with_capacity(window as usize);
    simulate_loop(model, design, &replica, replica_seed, None, f64::INFINITY, &mut |r| {
        values.push(r.g_hat);
        Ok(())
    })?;
    Ok(upper_quantile(&mut values, config.far))
}

/// Runs the full loop and hands every trace row to `sink` as it is
/// produced, so a caller can persist partial traces if a step fails.
pub fn run_online_experiment_with(
    config: &ExperimentConfig,
    sink: &mut dyn FnMut(&TraceRecord) -> Result<()>,
) -> Result<ExperimentResult> {
    config.validate()?;
    let model = config.model.resolve(config.seed)?;
    let weights = LqgWeights::identity(model.m(), model.p());
    let design = WatermarkDesign::new(&model, &weights, config.budget)?;
    let threshold = calibrate_online_threshold(&model, &design, config)?;
    let mut records = Vec::with_capacity(config.steps as usize);
    simulate_loop(&model, &design, config, config.seed, config.attack, threshold, &mut |r| {
        sink(&r)?;
        records.push(r);
        Ok(())
    })?;
    let metrics = compute_metrics(
        &records,
        &EvalOptions {
            attack: config.attack,
            slope_start: SLOPE_START,
        },
    );
    let summary = RunSummary {
        seed: config.seed,
        steps: config.steps,
        nbar: config.nbar.unwrap_or(model.n()),
        beta: config.beta,
        fit_every: config.fit_every,
        delta: design.delta,
        j0: design.j0,
        target_far: config.far,
        threshold,
        attack: config.attack,
        metrics,
    };
    Ok(ExperimentResult { model, records, summary })
}

pub fn run_online_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_online_experiment_with(config, &mut |_| Ok(()))
}

/// Runs `config` once per seed on a pool of `threads` workers (0 = all
/// cores). Each result lands in the slot of its seed.
pub fn run_seeds(config: &ExperimentConfig, seeds: &[u64], threads: usize) -> Result<Vec<Result<ExperimentResult>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| run_online_experiment(&ExperimentConfig { seed, ..config.clone() }))
            .collect()
    }))
}

/// Box's M test for equality of two covariance matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxM {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

/// Box's M test with the chi-square approximation.
pub fn box_m_test(a: &[Vector], b: &[Vector]) -> Result<BoxM> {
    let dim = a.first().map_or(0, |v| v.len());
    if dim == 0 || a.len() <= dim || b.len() <= dim {
        return Err(Error::InvalidParameter("each sample needs more rows than dimensions".into()));
    }
    let cov = |s: &[Vector]| -> Mat {
        let n = s.len() as f64;
        let mean = s.iter().fold(Vector::zeros(dim), |acc, v| acc + v) / n;
        s.iter()
            .fold(Mat::zeros(dim, dim), |acc, v| acc + (v - &mean) * (v - &mean).transpose())
            / (n - 1.0)
    };
    let logdet = |m: &Mat| -> Result<f64> {
        let chol = nalgebra::Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite {
            what: "sample covariance".into(),
        })?;
        Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
    };
    let (na, nb) = ((a.len() - 1) as f64, (b.len() - 1) as f64);
    let (sa, sb) = (cov(a), cov(b));
    let pooled = (&sa * na + &sb * nb) / (na + nb);
    let m_stat = (na + nb) * logdet(&pooled)? - na * logdet(&sa)? - nb * logdet(&sb)?;
    let d = dim as f64;
    let c = (2.0 * d * d + 3.0 * d - 1.0) / (6.0 * (d + 1.0)) * (1.0 / na + 1.0 / nb - 1.0 / (na + nb));
    let statistic = (m_stat * (1.0 - c)).max(0.0);
    let dof = d * (d + 1.0) / 2.0;
    let chi2 = ChiSquared::new(dof).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(BoxM {
        statistic,
        dof,
        p_value: chi2.sf(statistic),
    })
}

/// Monte-Carlo calibrated two-sample covariance test of a replayed window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StealthTest {
    /// Box's M statistic of the delivered window against an independent
    /// attack-free window.
    pub statistic: f64,
    /// Share of attack-free window pairs with a statistic at least as large.
    pub p_value: f64,
    pub replicas: usize,
}

fn stationary_window(model: &PlantModel, seed: u64, len: usize) -> Result<Vec<Vector>> {
    let mut sim = SimState::new(model, stream(seed, Role::ProcessNoise), stream(seed, Role::MeasurementNoise))?;
    let zero = Vector::zeros(model.p());
    (0..len).map(|_| sim.step(model, &zero)).collect()
}

/// Replays a window of an unwatermarked plant started from its stationary
/// distribution and compares what the detector receives with attack-free
/// output. The null distribution of Box's M comes from `replicas` pairs of
/// independent attack-free windows, so output autocorrelation is accounted
/// for.
pub fn stealth_test(model: &PlantModel, schedule: ReplaySchedule, seed: u64, replicas: usize) -> Result<StealthTest> {
    if replicas == 0 {
        return Err(Error::InvalidParameter("stealth test needs at least one replica".into()));
    }
    let mut sim = SimState::new(model, stream(seed, Role::ProcessNoise), stream(seed, Role::MeasurementNoise))?;
    let mut channel = ReplayChannel::new(schedule);
    let zero = Vector::zeros(model.p());
    let mut delivered = Vec::new();
    for k in 0..=schedule.k2() + schedule.t() {
        let y = sim.step(model, &zero)?;
        let out = channel.transmit(k, &y)?;
        if schedule.replaying(k) {
            delivered.push(out);
        }
    }
    let len = delivered.len();
    let mut seeds = stream(seed, Role::Auxiliary);
    let reference = stationary_window(model, seeds.next_u64(), len)?;
    let statistic = box_m_test(&delivered, &reference)?.statistic;
    let mut exceed = 0;
    for _ in 0..replicas {
        let a = stationary_window(model, seeds.next_u64(), len)?;
        let b = stationary_window(model, seeds.next_u64(), len)?;
        if box_m_test(&a, &b)?.statistic >= statistic {
            exceed += 1;
        }
    }
    Ok(StealthTest {
        statistic,
        p_value: (exceed + 1) as f64 / (replicas + 1) as f64,
        replicas,
    })
}
