#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use watermark_core::harness::generate_random_system;
use watermark_core::linalg::{CMat, Mat, C64};
use watermark_core::model::PlantModel;
use watermark_core::rng::{stream, Role};

pub fn m1(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

pub fn scalar_model() -> PlantModel {
    PlantModel::new(m1(0.5), m1(1.0), m1(1.0), m1(1.0), m1(1.0)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream(seed, Role::Auxiliary)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random plant with `n <= 6` and `m, p <= 4`, spectral radius 0.9.
pub fn random_plant(seed: u64) -> PlantModel {
    let mut r = rng(seed);
    let n = r.random_range(1..=6);
    let m = r.random_range(1..=4);
    let p = r.random_range(1..=4);
    generate_random_system(seed, n, m, p, 0.9).unwrap()
}

/// `H_tau = sum_i lambda_i^tau Omega_i`, real part.
pub fn modal_bank(lambdas: &[C64], omegas: &[CMat], len: usize) -> Vec<Mat> {
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

/// Random conjugate-closed modal model: `nbar` roots with moduli in
/// [0.2, 0.9], pairwise separated by at least 0.1, and matching residues.
pub fn random_modes(seed: u64, nbar: usize, m: usize, p: usize) -> (Vec<C64>, Vec<CMat>) {
    let mut r = rng(seed);
    loop {
        let mut lambdas = Vec::new();
        let mut omegas = Vec::new();
        while lambdas.len() < nbar {
            let modulus = r.random_range(0.2..0.9);
            let pair = nbar - lambdas.len() >= 2 && r.random_bool(0.5);
            let re_o = gaussian(&mut r, m, p);
            if pair {
                let angle = r.random_range(0.3..2.8);
                let l = C64::from_polar(modulus, angle);
                let im_o = gaussian(&mut r, m, p);
                let o = CMat::from_fn(m, p, |i, j| C64::new(re_o[(i, j)], im_o[(i, j)]));
                lambdas.push(l);
                lambdas.push(l.conj());
                omegas.push(o.clone());
                omegas.push(o.map(|z| z.conj()));
            } else {
                let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
                lambdas.push(C64::new(sign * modulus, 0.0));
                omegas.push(re_o.map(|x| C64::new(x, 0.0)));
            }
        }
        let separated = (0..nbar).all(|i| (i + 1..nbar).all(|j| (lambdas[i] - lambdas[j]).norm() >= 0.1));
        if separated {
            return (lambdas, omegas);
        }
    }
}

/// Index of the entry of `set` nearest to `target`.
pub fn nearest(set: &[C64], target: C64) -> usize {
    (0..set.len())
        .min_by(|&a, &b| (set[a] - target).norm().total_cmp(&(set[b] - target).norm()))
        .unwrap()
}
