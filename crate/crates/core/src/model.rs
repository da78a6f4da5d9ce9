//! Discrete-time LTI plant: representation, simulation, steady-state
//! statistics, Markov parameters and closed-loop augmentation.
//!
//! The plant evolves as
//!
//! ```text
//! x_k = A x_{k-1} + B phi_k + w_k,    y_k = C x_k + v_k
//! ```
//!
//! with `w_k ~ N(0, Q)`, `v_k ~ N(0, R)` and `Cov(w_k, v_k) = S`. `S` is zero
//! for ordinary plants and only becomes non-zero for closed-loop augmented
//! models, where the estimator feeds the current measurement noise into the
//! augmented state.

use std::path::Path;

use nalgebra::Complex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    check_len, check_psd, check_shape, check_square, mat_to_rows, psd_factor, rank, rows_to_mat,
    spectral_radius, stein_series, symmetrize, to_complex, CMat, Mat, Vector, C64,
};

const LYAPUNOV_TOL: f64 = 1e-12;
const LYAPUNOV_MAX_ITER: usize = 1_000_000;
const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    a: Mat,
    b: Mat,
    c: Mat,
    q: Mat,
    r: Mat,
    s: Mat,
}

/// One term of the modal expansion `H_tau = sum_i lambda_i^tau Omega_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub lambda: C64,
    pub omega: CMat,
}

impl PlantModel {
    /// Builds a plant and checks every invariant: dimensions, strict
    /// stability, PSD noise covariances, observability and controllability.
    pub fn new(a: Mat, b: Mat, c: Mat, q: Mat, r: Mat) -> Result<Self> {
        let n = a.nrows();
        let m = c.nrows();
        let s = Mat::zeros(n, m);
        let model = Self::from_parts(a, b, c, q, r, s)?;
        model.check_minimal()?;
        Ok(model)
    }

    /// Like [`PlantModel::new`] but with a process/measurement noise
    /// cross-covariance `S = Cov(w_k, v_k)`.
    pub fn with_noise_cross(a: Mat, b: Mat, c: Mat, q: Mat, r: Mat, s: Mat) -> Result<Self> {
        let model = Self::from_parts(a, b, c, q, r, s)?;
        model.check_minimal()?;
        Ok(model)
    }

    /// Validates everything except observability and controllability.
    pub(crate) fn from_parts(a: Mat, b: Mat, c: Mat, q: Mat, r: Mat, s: Mat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter("state dimension n must be positive".into()));
        }
        check_square(&a, n, "A")?;
        let p = b.ncols();
        let m = c.nrows();
        if p == 0 || m == 0 {
            return Err(Error::InvalidParameter("dimensions m and p must be positive".into()));
        }
        check_shape(&b, (n, p), "B")?;
        check_shape(&c, (m, n), "C")?;
        check_square(&q, n, "Q")?;
        check_square(&r, m, "R")?;
        check_shape(&s, (n, m), "S")?;
        let rho = spectral_radius(&a);
        if rho >= 1.0 {
            return Err(Error::UnstableSystem { spectral_radius: rho });
        }
        check_psd(&q, "Q")?;
        check_psd(&r, "R")?;
        if s.norm() > 0.0 {
            check_psd(&joint_noise_cov(&q, &r, &s), "joint noise covariance [[Q, S], [S^T, R]]")?;
        }
        Ok(Self { a, b, c, q, r, s })
    }

    /// Checks observability of (A, C) and controllability of (A, B).
    pub fn check_minimal(&self) -> Result<()> {
        let n = self.n();
        let obs = observability_matrix(&self.a, &self.c);
        let ro = rank(&obs, RANK_TOL);
        if ro < n {
            return Err(Error::NotObservable { rank: ro, n });
        }
        let ctrb = controllability_matrix(&self.a, &self.b);
        let rc = rank(&ctrb, RANK_TOL);
        if rc < n {
            return Err(Error::NotControllable { rank: rc, n });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn c(&self) -> &Mat {
        &self.c
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    /// Noise cross-covariance `Cov(w_k, v_k)`.
    pub fn s(&self) -> &Mat {
        &self.s
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    /// Steady-state state covariance `Sigma = A Sigma A^T + Q`.
    pub fn state_cov(&self) -> Result<Mat> {
        lyapunov_solve(&self.a, &self.q)
    }

    /// Markov parameter `H_tau = C A^tau B`.
    pub fn markov_parameter(&self, tau: usize) -> Mat {
        let mut ab = self.b.clone();
        for _ in 0..tau {
            ab = &self.a * ab;
        }
        &self.c * ab
    }

    /// Distinct eigenvalues of `A` with their output/input residues
    /// `Omega_i = C P_i B`, where `P_i` is the spectral projector of the
    /// eigenvalue `lambda_i`. Assumes `A` is diagonalizable; eigenvalues
    /// closer than `cluster_tol` are merged.
    pub fn modal_decomposition(&self, cluster_tol: f64) -> Vec<Mode> {
        let eigs = crate::linalg::eigenvalues(&self.a);
        let mut clusters: Vec<Vec<C64>> = Vec::new();
        for &l in eigs.iter() {
            match clusters.iter_mut().find(|c| (c[0] - l).norm() <= cluster_tol) {
                Some(c) => c.push(l),
                None => clusters.push(vec![l]),
            }
        }
        let lambdas: Vec<C64> = clusters
            .iter()
            .map(|c| c.iter().sum::<C64>() / c.len() as f64)
            .collect();
        let n = self.n();
        let ac = to_complex(&self.a);
        let bc = to_complex(&self.b);
        let cc = to_complex(&self.c);
        let eye = CMat::identity(n, n);
        lambdas
            .iter()
            .enumerate()
            .map(|(i, &li)| {
                let mut proj = eye.clone();
                for (j, &lj) in lambdas.iter().enumerate() {
                    if i != j {
                        proj = proj * (&ac - &eye * lj) / (li - lj);
                    }
                }
                Mode {
                    lambda: li,
                    omega: &cc * proj * &bc,
                }
            })
            .collect()
    }

    /// Number of distinct eigenvalues of `A` (at cluster tolerance `tol`).
    pub fn distinct_eigenvalue_count(&self, tol: f64) -> usize {
        self.modal_decomposition(tol).len()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.into_model()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn joint_noise_cov(q: &Mat, r: &Mat, s: &Mat) -> Mat {
    let n = q.nrows();
    let m = r.nrows();
    let mut j = Mat::zeros(n + m, n + m);
    j.view_mut((0, 0), (n, n)).copy_from(q);
    j.view_mut((0, n), (n, m)).copy_from(s);
    j.view_mut((n, 0), (m, n)).copy_from(&s.transpose());
    j.view_mut((n, n), (m, m)).copy_from(r);
    j
}

pub fn observability_matrix(a: &Mat, c: &Mat) -> Mat {
    let n = a.nrows();
    let m = c.nrows();
    let mut o = Mat::zeros(n * m, n);
    let mut block = c.clone();
    for i in 0..n {
        o.view_mut((i * m, 0), (m, n)).copy_from(&block);
        block = &block * a;
    }
    o
}

pub fn controllability_matrix(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let p = b.ncols();
    let mut k = Mat::zeros(n, n * p);
    let mut block = b.clone();
    for i in 0..n {
        k.view_mut((0, i * p), (n, p)).copy_from(&block);
        block = a * &block;
    }
    k
}

/// Solves `Sigma = A Sigma A^T + Q` by fixed-point iteration.
pub fn lyapunov_solve(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    check_square(a, n, "A")?;
    check_square(q, n, "Q")?;
    stein_series(a, q, LYAPUNOV_TOL, LYAPUNOV_MAX_ITER)
}

/// JSON model document: dimensions plus row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<Vec<f64>>>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<PlantModel> {
        let (n, m, p) = (self.n, self.m, self.p);
        let load = |rows: &[Vec<f64>], what: &str, shape: (usize, usize)| -> Result<Mat> {
            let mat = if rows.is_empty() {
                Mat::zeros(0, 0)
            } else {
                rows_to_mat(rows, what)?
            };
            check_shape(&mat, shape, what)?;
            Ok(mat)
        };
        let a = load(&self.a, "A", (n, n))?;
        let b = load(&self.b, "B", (n, p))?;
        let c = load(&self.c, "C", (m, n))?;
        let q = load(&self.q, "Q", (n, n))?;
        let r = load(&self.r, "R", (m, m))?;
        let s = match &self.s {
            Some(rows) => load(rows, "S", (n, m))?,
            None => Mat::zeros(n, m),
        };
        PlantModel::with_noise_cross(a, b, c, q, r, s)
    }
}

impl From<&PlantModel> for ModelFile {
    fn from(model: &PlantModel) -> Self {
        Self {
            n: model.n(),
            m: model.m(),
            p: model.p(),
            a: mat_to_rows(&model.a),
            b: mat_to_rows(&model.b),
            c: mat_to_rows(&model.c),
            q: mat_to_rows(&model.q),
            r: mat_to_rows(&model.r),
            s: (model.s.norm() > 0.0).then(|| mat_to_rows(&model.s)),
        }
    }
}

/// Builds the open-loop form of a plant under the estimator/controller pair
///
/// ```text
/// x_{k+1}  = A x_k + B (u_k + phi_k) + w_k,   y_k = C x_k + v_k
/// xh_{k+1} = A xh_k + K (y_{k+1} - C A xh_k), u_k = L xh_k
/// ```
///
/// with augmented state `[x; xh]` and output `[y; u]`. The estimator
/// propagation has no `B u_k` term. The plant itself may be unstable; only
/// the augmented dynamics must be. Observability and controllability of the
/// augmented model are not required.
pub fn closed_loop_augment(
    a: &Mat,
    b: &Mat,
    c: &Mat,
    q: &Mat,
    r: &Mat,
    k_gain: &Mat,
    l_gain: &Mat,
) -> Result<PlantModel> {
    let n = a.nrows();
    check_square(a, n, "A")?;
    let p = b.ncols();
    let m = c.nrows();
    check_shape(b, (n, p), "B")?;
    check_shape(c, (m, n), "C")?;
    check_square(q, n, "Q")?;
    check_square(r, m, "R")?;
    check_shape(k_gain, (n, m), "K")?;
    check_shape(l_gain, (p, n), "L")?;

    let kc = k_gain * c;
    let mut at = Mat::zeros(2 * n, 2 * n);
    at.view_mut((0, 0), (n, n)).copy_from(a);
    at.view_mut((0, n), (n, n)).copy_from(&(b * l_gain));
    at.view_mut((n, 0), (n, n)).copy_from(&(&kc * a));
    at.view_mut((n, n), (n, n))
        .copy_from(&(a + &kc * b * l_gain - &kc * a));
    let rho = spectral_radius(&at);
    if rho >= 1.0 {
        return Err(Error::UnstableClosedLoop { spectral_radius: rho });
    }

    let mut bt = Mat::zeros(2 * n, p);
    bt.view_mut((0, 0), (n, p)).copy_from(b);
    bt.view_mut((n, 0), (n, p)).copy_from(&(&kc * b));

    let mut ct = Mat::zeros(m + p, 2 * n);
    ct.view_mut((0, 0), (m, n)).copy_from(c);
    ct.view_mut((m, n), (p, n)).copy_from(l_gain);

    // [w; v] maps to the augmented process noise through `mix` and to the
    // augmented measurement noise through `pick`.
    let noise = joint_noise_cov(q, r, &Mat::zeros(n, m));
    let mut mix = Mat::zeros(2 * n, n + m);
    mix.view_mut((0, 0), (n, n)).copy_from(&Mat::identity(n, n));
    mix.view_mut((n, 0), (n, n)).copy_from(&kc);
    mix.view_mut((n, n), (n, m)).copy_from(k_gain);
    let mut pick = Mat::zeros(m + p, n + m);
    pick.view_mut((0, n), (m, m)).copy_from(&Mat::identity(m, m));

    let qt = symmetrize(&(&mix * &noise * mix.transpose()));
    let rt = symmetrize(&(&pick * &noise * pick.transpose()));
    let st = &mix * &noise * pick.transpose();
    PlantModel::from_parts(at, bt, ct, qt, rt, st)
}

/// Draws process and measurement noise with the plant's joint covariance.
///
/// `v = F_R xi_v` and `w = G v + F_c xi_w` with `G = S R^+` and
/// `F_c F_c^T = Q - S R^+ S^T`.
#[derive(Debug, Clone)]
struct NoiseSampler {
    meas_factor: Mat,
    proc_gain: Mat,
    proc_factor: Mat,
}

impl NoiseSampler {
    fn new(model: &PlantModel) -> Result<Self> {
        let meas_factor = psd_factor(&model.r, "R")?;
        if model.s.norm() == 0.0 {
            return Ok(Self {
                meas_factor,
                proc_gain: Mat::zeros(model.n(), model.m()),
                proc_factor: psd_factor(&model.q, "Q")?,
            });
        }
        let scale = model.r.norm().max(f64::MIN_POSITIVE);
        let r_pinv = symmetrize(&model.r)
            .pseudo_inverse(1e-12 * scale)
            .map_err(|e| Error::Singular { what: e.to_string() })?;
        let proc_gain = &model.s * &r_pinv;
        let cond = symmetrize(&(&model.q - &proc_gain * model.s.transpose()));
        Ok(Self {
            meas_factor,
            proc_gain,
            proc_factor: psd_factor(&cond, "conditional process noise covariance")?,
        })
    }

    fn draw(&self, proc_rng: &mut ChaCha8Rng, meas_rng: &mut ChaCha8Rng) -> (Vector, Vector) {
        let xi_v = standard_normal_vector(meas_rng, self.meas_factor.ncols());
        let xi_w = standard_normal_vector(proc_rng, self.proc_factor.ncols());
        let v = &self.meas_factor * xi_v;
        let w = &self.proc_gain * &v + &self.proc_factor * xi_w;
        (w, v)
    }
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vector {
    Vector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Simulation state of one plant run. Noise is drawn only from the two
/// owned streams, so a run is bit-reproducible given their seeds.
#[derive(Debug, Clone)]
pub struct SimState {
    x: Vector,
    k: u64,
    noise: NoiseSampler,
    proc_rng: ChaCha8Rng,
    meas_rng: ChaCha8Rng,
}

impl SimState {
    /// Starts in steady state: `x_{-1} ~ N(0, Sigma)`, drawn from the
    /// process-noise stream.
    pub fn new(model: &PlantModel, mut proc_rng: ChaCha8Rng, meas_rng: ChaCha8Rng) -> Result<Self> {
        let sigma_factor = psd_factor(&model.state_cov()?, "Sigma")?;
        let x = &sigma_factor * standard_normal_vector(&mut proc_rng, model.n());
        Ok(Self {
            x,
            k: 0,
            noise: NoiseSampler::new(model)?,
            proc_rng,
            meas_rng,
        })
    }

    /// Starts from a given `x_{-1}`.
    pub fn with_initial_state(
        model: &PlantModel,
        x: Vector,
        proc_rng: ChaCha8Rng,
        meas_rng: ChaCha8Rng,
    ) -> Result<Self> {
        check_len(&x, model.n(), "initial state")?;
        Ok(Self {
            x,
            k: 0,
            noise: NoiseSampler::new(model)?,
            proc_rng,
            meas_rng,
        })
    }

    pub fn x(&self) -> &Vector {
        &self.x
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    /// Advances one step with watermark `phi` and returns the measurement.
    pub fn step(&mut self, model: &PlantModel, phi: &Vector) -> Result<Vector> {
        check_len(phi, model.p(), "watermark")?;
        check_len(&self.x, model.n(), "state")?;
        let (w, v) = self.noise.draw(&mut self.proc_rng, &mut self.meas_rng);
        check_len(&v, model.m(), "measurement noise")?;
        self.x = model.a() * &self.x + model.b() * phi + w;
        self.k += 1;
        Ok(model.c() * &self.x + v)
    }
}

/// Complex-valued Markov parameter from a modal expansion.
pub fn modal_markov_parameter(modes: &[Mode], tau: usize) -> Mat {
    let mut h = CMat::zeros(modes[0].omega.nrows(), modes[0].omega.ncols());
    for mode in modes {
        h += &mode.omega * mode.lambda.powu(tau as u32);
    }
    h.map(|z: Complex<f64>| z.re)
}
