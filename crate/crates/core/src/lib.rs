//! Optimal physical watermarking for replay-attack detection in linear
//! time-invariant systems, with an online algorithm that identifies the
//! plant while converging to the optimal watermark and detector.
//!
//! * [`model`]: plant representation, simulation and steady-state statistics.
//! * [`design`]: offline optimal watermark for a known plant.
//! * [`detector`]: Neyman-Pearson statistic and threshold calibration.
//! * [`learner`]: the online identification and design loop.
//! * [`attack`]: the replay adversary.
//! * [`harness`]: experiments, random systems, traces and metrics.

pub mod attack;
pub mod design;
pub mod detector;
pub mod error;
pub mod harness;
pub mod learner;
pub mod linalg;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
