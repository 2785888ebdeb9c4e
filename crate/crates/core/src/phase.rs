//! Phase boundaries `A_j = ceil(j^beta)` and their inverse.
//!
//! `j^beta` is evaluated in floating point and then corrected against an exact
//! comparison. When `beta` equals a fraction `p/q` with a small denominator the
//! comparison `c >= j^(p/q)` is decided exactly as `c^q >= j^p` over big
//! integers; otherwise it falls back to a log-space comparison.

use num_bigint::BigUint;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("phase exponent must be > 1 and finite, got {0}")]
    BadBeta(f64),
    #[error("phase end for j={0} overflows the timestep type")]
    Overflow(u64),
    #[error("timestep must be >= 1")]
    ZeroTime,
}

const MAX_DENOMINATOR: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSchedule {
    beta: f64,
    horizon: u64,
    ratio: Option<(u64, u64)>,
}

impl PhaseSchedule {
    pub fn new(beta: f64, horizon: u64) -> Result<Self, ScheduleError> {
        if !beta.is_finite() || beta <= 1.0 {
            return Err(ScheduleError::BadBeta(beta));
        }
        Ok(Self { beta, horizon, ratio: small_fraction(beta) })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// `A_j`; `A_0 = 0`.
    pub fn phase_end(&self, j: u64) -> Result<u64, ScheduleError> {
        if j == 0 {
            return Ok(0);
        }
        if j == 1 {
            return Ok(1);
        }
        let approx = (j as f64).powf(self.beta);
        if !approx.is_finite() || approx >= 9.0e18 {
            return Err(ScheduleError::Overflow(j));
        }
        // Smallest c with c >= j^beta, searched around the float estimate.
        let mut c = approx.ceil() as u64;
        while c > 1 && self.at_least_power(c - 1, j) {
            c -= 1;
        }
        while !self.at_least_power(c, j) {
            c += 1;
        }
        Ok(c)
    }

    /// Largest `j` with `A_j <= t`.
    pub fn phase_of(&self, t: u64) -> Result<u64, ScheduleError> {
        if t == 0 {
            return Err(ScheduleError::ZeroTime);
        }
        let mut j = (t as f64).powf(1.0 / self.beta).floor() as u64;
        while j > 0 && self.phase_end(j)? > t {
            j -= 1;
        }
        while self.phase_end(j + 1)? <= t {
            j += 1;
        }
        Ok(j)
    }

    /// Length of phase `j`, `A_j - A_{j-1}`.
    pub fn phase_len(&self, j: u64) -> Result<u64, ScheduleError> {
        Ok(self.phase_end(j)? - self.phase_end(j.saturating_sub(1))?)
    }

    /// Number of phases whose end falls at or before the horizon.
    pub fn complete_phases(&self) -> Result<u64, ScheduleError> {
        if self.horizon == 0 {
            return Ok(0);
        }
        self.phase_of(self.horizon)
    }

    /// Phases intersecting `[1, horizon]`, each as `(j, first_t, last_t, complete)`.
    /// The last one is truncated at the horizon when `A_j > horizon`.
    pub fn phases(&self) -> Result<Vec<PhaseSpan>, ScheduleError> {
        let mut out = Vec::new();
        let mut j = 1;
        let mut prev = 0;
        while prev < self.horizon {
            let end = self.phase_end(j)?;
            let last = end.min(self.horizon);
            out.push(PhaseSpan { index: j, first: prev + 1, last, complete: end <= self.horizon });
            prev = end;
            j += 1;
        }
        Ok(out)
    }

    // c >= j^beta
    fn at_least_power(&self, c: u64, j: u64) -> bool {
        if let Some((p, q)) = self.ratio {
            let lhs = BigUint::from(c).pow(q as u32);
            let rhs = BigUint::from(j).pow(p as u32);
            return lhs >= rhs;
        }
        let lhs = (c as f64).ln();
        let rhs = self.beta * (j as f64).ln();
        lhs >= rhs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseSpan {
    pub index: u64,
    pub first: u64,
    pub last: u64,
    pub complete: bool,
}

impl PhaseSpan {
    pub fn len(&self) -> u64 {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        self.last < self.first
    }
}

/// `p/q` with `q <= MAX_DENOMINATOR` whose f64 value is exactly `x`.
fn small_fraction(x: f64) -> Option<(u64, u64)> {
    for q in 1..=MAX_DENOMINATOR {
        let p = (x * q as f64).round();
        if p > 0.0 && p < 512.0 && p / q as f64 == x {
            return Some((p as u64, q));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_beta_values() {
        let s = PhaseSchedule::new(3.0, 1000).unwrap();
        assert_eq!(s.phase_end(0).unwrap(), 0);
        assert_eq!(s.phase_end(2).unwrap(), 8);
        assert_eq!(s.phase_end(3).unwrap(), 27);
        assert_eq!(s.phase_of(8).unwrap(), 2);
        assert_eq!(s.phase_of(26).unwrap(), 2);
        assert_eq!(s.phase_of(27).unwrap(), 3);
    }

    #[test]
    fn fractional_beta_values() {
        let s = PhaseSchedule::new(2.5, 1000).unwrap();
        // 10^2.5 = 316.227..., and 317^2 = 100489 >= 10^5 > 316^2 = 99856.
        assert_eq!(s.phase_end(10).unwrap(), 317);
        assert_eq!(s.phase_of(316).unwrap(), 9);
        // 4^2.5 = 32 exactly.
        assert_eq!(s.phase_end(4).unwrap(), 32);
        assert_eq!(s.phase_of(32).unwrap(), 4);
        assert_eq!(s.phase_of(31).unwrap(), 3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PhaseSchedule::new(1.0, 10).is_err());
        assert!(PhaseSchedule::new(f64::NAN, 10).is_err());
        let s = PhaseSchedule::new(3.0, 10).unwrap();
        assert_eq!(s.phase_of(0), Err(ScheduleError::ZeroTime));
        assert_eq!(s.phase_end(3_000_000), Err(ScheduleError::Overflow(3_000_000)));
    }

    #[test]
    fn phase_spans_cover_horizon() {
        let s = PhaseSchedule::new(3.0, 30).unwrap();
        let spans = s.phases().unwrap();
        assert_eq!(spans[0], PhaseSpan { index: 1, first: 1, last: 1, complete: true });
        assert_eq!(spans[1].len(), 7);
        assert_eq!(spans.iter().map(PhaseSpan::len).sum::<u64>(), 30);
        let last = spans.last().unwrap();
        assert_eq!(last.index, 4);
        assert!(!last.complete);
        assert_eq!(s.complete_phases().unwrap(), 3);
    }

    #[test]
    fn detects_small_fractions() {
        assert_eq!(small_fraction(3.0), Some((3, 1)));
        assert_eq!(small_fraction(2.5), Some((5, 2)));
        assert_eq!(small_fraction(2.1), Some((21, 10)));
    }
}
