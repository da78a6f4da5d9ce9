//! Replay adversary: records a window of true sensor outputs and later
//! delivers them in place of the live ones, `y'_k = y_{k - dk}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Records on steps `k1 ..= k1 + t`, replays on `k2 ..= k2 + t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaySchedule {
    k1: u64,
    t: u64,
    k2: u64,
}

impl ReplaySchedule {
    pub fn new(k1: u64, t: u64, k2: u64) -> Result<Self> {
        if t < 1 {
            return Err(Error::InvalidSchedule(format!("window length {t} must be at least 1")));
        }
        let record_end = k1
            .checked_add(t)
            .ok_or_else(|| Error::InvalidSchedule("record window overflows".into()))?;
        if k2 < record_end {
            return Err(Error::InvalidSchedule(format!(
                "replay start {k2} precedes end of recording {record_end}"
            )));
        }
        k2.checked_add(t)
            .ok_or_else(|| Error::InvalidSchedule("replay window overflows".into()))?;
        Ok(Self { k1, t, k2 })
    }

    /// Schedule from the number of recorded samples `len = t + 1`.
    pub fn from_len(record_start: u64, len: u64, replay_start: u64) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidSchedule(format!(
                "record length {len} must be at least 2"
            )));
        }
        Self::new(record_start, len - 1, replay_start)
    }

    pub fn k1(&self) -> u64 {
        self.k1
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn k2(&self) -> u64 {
        self.k2
    }

    pub fn lag(&self) -> u64 {
        self.k2 - self.k1
    }

    /// Samples per window, `t + 1`.
    pub fn len(&self) -> u64 {
        self.t + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn recording(&self, k: u64) -> bool {
        (self.k1..=self.k1 + self.t).contains(&k)
    }

    pub fn replaying(&self, k: u64) -> bool {
        (self.k2..=self.k2 + self.t).contains(&k)
    }
}

#[derive(Debug, Clone)]
pub struct ReplayChannel {
    schedule: ReplaySchedule,
    buffer: Vec<Vector>,
    next_k: u64,
}

impl ReplayChannel {
    pub fn new(schedule: ReplaySchedule) -> Self {
        Self {
            schedule,
            buffer: Vec::with_capacity(schedule.len() as usize),
            next_k: 0,
        }
    }

    pub fn schedule(&self) -> &ReplaySchedule {
        &self.schedule
    }

    pub fn recorded(&self) -> &[Vector] {
        &self.buffer
    }

    /// Output delivered to the detector at step `k`. Steps must be fed in
    /// order starting from zero.
    pub fn transmit(&mut self, k: u64, y_true: &Vector) -> Result<Vector> {
        if k != self.next_k {
            return Err(Error::InvalidParameter(format!(
                "channel expected step {}, got {k}",
                self.next_k
            )));
        }
        self.next_k += 1;
        let s = &self.schedule;
        if s.recording(k) {
            self.buffer.push(y_true.clone());
        }
        if s.replaying(k) {
            return Ok(self.buffer[(k - s.k2) as usize].clone());
        }
        Ok(y_true.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn y(v: f64) -> Vector {
        Vector::from_vec(vec![v, -v])
    }

    #[test]
    fn schedule_invariants() {
        assert!(ReplaySchedule::new(5, 0, 10).is_err());
        assert!(ReplaySchedule::new(5, 3, 7).is_err());
        assert!(ReplaySchedule::new(5, 3, 8).is_ok());
        assert!(ReplaySchedule::new(u64::MAX, 3, u64::MAX).is_err());
        assert!(ReplaySchedule::from_len(0, 1, 5).is_err());
        let s = ReplaySchedule::from_len(10_001, 100, 10_101).unwrap();
        assert_eq!((s.k1(), s.t(), s.k2(), s.lag()), (10_001, 99, 10_101, 100));
    }

    #[test]
    fn passthrough_outside_windows() {
        let mut ch = ReplayChannel::new(ReplaySchedule::new(2, 1, 6).unwrap());
        for k in 0..2 {
            assert_eq!(ch.transmit(k, &y(k as f64)).unwrap(), y(k as f64));
        }
    }

    #[test]
    fn replay_start_delivers_first_record() {
        let s = ReplaySchedule::new(2, 1, 6).unwrap();
        let mut ch = ReplayChannel::new(s);
        let mut out = Vec::new();
        for k in 0..10 {
            out.push(ch.transmit(k, &y(k as f64)).unwrap());
        }
        assert_eq!(out[6], y(2.0));
        assert_eq!(out[7], y(3.0));
        assert_eq!(out[8], y(8.0));
    }

    #[test]
    fn record_ends_on_replay_start() {
        let s = ReplaySchedule::new(0, 2, 2).unwrap();
        let mut ch = ReplayChannel::new(s);
        let out: Vec<Vector> = (0..6).map(|k| ch.transmit(k, &y(k as f64)).unwrap()).collect();
        assert_eq!(out, vec![y(0.0), y(1.0), y(0.0), y(1.0), y(2.0), y(5.0)]);
    }

    #[test]
    fn reference_protocol_replays_window_in_order() {
        let s = ReplaySchedule::from_len(10_001, 100, 10_101).unwrap();
        let mut ch = ReplayChannel::new(s);
        let mut delivered = Vec::new();
        for k in 0..10_300u64 {
            let out = ch.transmit(k, &y(k as f64 * 0.1)).unwrap();
            if s.replaying(k) {
                delivered.push(out);
            }
        }
        assert_eq!(delivered.len(), 100);
        assert_eq!(ch.recorded().len(), 100);
        for (a, b) in delivered.iter().zip(ch.recorded()) {
            for (x, z) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), z.to_bits());
            }
        }
        assert_eq!(delivered[0], y(10_001.0 * 0.1));
    }

    #[test]
    fn out_of_order_steps_rejected() {
        let mut ch = ReplayChannel::new(ReplaySchedule::new(2, 1, 6).unwrap());
        assert!(ch.transmit(1, &y(0.0)).is_err());
    }
}
