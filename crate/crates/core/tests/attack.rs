mod common;

use common::*;
use watermark_core::attack::{ReplayChannel, ReplaySchedule};
use watermark_core::harness::{box_m_test, generate_random_system, stealth_test};
use watermark_core::linalg::Vector;
use watermark_core::model::{standard_normal_vector, SimState};
use watermark_core::rng::{stream, Role};

#[test]
fn replay_delivers_recording_verbatim() {
    let plant = generate_random_system(5, 5, 3, 2, 0.9).unwrap();
    let schedule = ReplaySchedule::from_len(10_001, 100, 10_101).unwrap();
    let mut sim = SimState::new(&plant, stream(5, Role::ProcessNoise), stream(5, Role::MeasurementNoise)).unwrap();
    let mut channel = ReplayChannel::new(schedule);
    let mut truth = Vec::new();
    let mut delivered = Vec::new();
    let zero = Vector::zeros(2);
    for k in 0..=schedule.k2() + schedule.t() + 5 {
        let y = sim.step(&plant, &zero).unwrap();
        let out = channel.transmit(k, &y).unwrap();
        if schedule.replaying(k) {
            delivered.push(out);
        } else {
            assert_eq!(out, y);
        }
        if schedule.recording(k) {
            truth.push(y);
        }
    }
    assert_eq!(truth.len(), 100);
    assert_eq!(delivered.len(), 100);
    for (a, b) in truth.iter().zip(&delivered) {
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn replay_without_watermark_is_stealthy() {
    let schedule = ReplaySchedule::from_len(10_001, 100, 10_101).unwrap();
    let trials = 40;
    let mut rejections = 0;
    for seed in 0..trials {
        let plant = generate_random_system(seed, 5, 3, 2, 0.9).unwrap();
        let test = stealth_test(&plant, schedule, seed, 199).unwrap();
        assert!(test.p_value > 0.0 && test.p_value <= 1.0);
        if test.p_value < 0.05 {
            rejections += 1;
        }
    }
    // Binomial(40, 0.05): P(X > 7) < 1e-3
    assert!(rejections <= 7, "{rejections} of {trials} rejected");
}

#[test]
fn box_m_detects_scaled_covariance() {
    let mut r = rng(3);
    let a: Vec<Vector> = (0..200).map(|_| standard_normal_vector(&mut r, 3)).collect();
    let b: Vec<Vector> = (0..200).map(|_| standard_normal_vector(&mut r, 3) * 2.0).collect();
    assert!(box_m_test(&a, &b).unwrap().p_value < 1e-6);
    assert!(box_m_test(&a[..3], &b).is_err());
}

#[test]
fn invalid_schedules_are_rejected() {
    assert!(ReplaySchedule::new(10, 0, 20).is_err());
    assert!(ReplaySchedule::new(10, 5, 14).is_err());
    assert!(ReplaySchedule::new(u64::MAX - 2, 5, u64::MAX).is_err());
    let s = ReplaySchedule::new(10, 5, 15).unwrap();
    assert_eq!((s.lag(), s.len()), (5, 6));
}
