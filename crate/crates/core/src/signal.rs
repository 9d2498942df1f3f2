//! Two-phase signal timing and the per-ring green indicators.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fixed-cycle two-phase signal: cycle length `T`, lost time `Δ` per phase,
/// and effective green ratios `π1`, `π2` with `(π1 + π2) T = T - 2Δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalTiming<T> {
    cycle: T,
    lost_time: T,
    green_ratio_1: T,
    green_ratio_2: T,
}

/// Which of the four intervals of a cycle the clock is in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseInterval {
    /// Effective green for ring 1: `[0, π1 T)` within the cycle.
    Green1,
    /// Lost time after phase one: `[π1 T, π1 T + Δ)`.
    Lost1,
    /// Effective green for ring 2: `[π1 T + Δ, T - Δ)`.
    Green2,
    /// Lost time closing the cycle: `[T - Δ, T)`.
    Lost2,
}

impl<T: Scalar> SignalTiming<T> {
    /// Timing with an explicit ring-1 green ratio; `π2` is derived from the
    /// cycle identity.
    pub fn new(cycle: T, lost_time: T, green_ratio_1: T) -> Result<Self> {
        if !(cycle > T::zero()) || !cycle.is_finite() {
            return Err(Error::InvalidTiming(format!(
                "cycle length must be positive, got {cycle}"
            )));
        }
        if lost_time < T::zero() || !lost_time.is_finite() {
            return Err(Error::InvalidTiming(format!(
                "lost time must be non-negative, got {lost_time}"
            )));
        }
        let green_ratio_2 = (cycle - T::two() * lost_time) / cycle - green_ratio_1;
        let timing = Self {
            cycle,
            lost_time,
            green_ratio_1,
            green_ratio_2,
        };
        timing.validate()?;
        Ok(timing)
    }

    /// Symmetric timing `π1 = π2 = (T - 2Δ) / (2T)`.
    pub fn symmetric(cycle: T, lost_time: T) -> Result<Self> {
        if !(cycle > T::zero()) || !cycle.is_finite() {
            return Err(Error::InvalidTiming(format!(
                "cycle length must be positive, got {cycle}"
            )));
        }
        let pi = (cycle - T::two() * lost_time) / (T::two() * cycle);
        Self::new(cycle, lost_time, pi)
    }

    fn validate(&self) -> Result<()> {
        if !(self.green_ratio_1 > T::zero()) {
            return Err(Error::InvalidTiming(format!(
                "green ratio pi1 must be positive, got {}",
                self.green_ratio_1
            )));
        }
        if !(self.green_ratio_2 > T::zero()) {
            return Err(Error::InvalidTiming(format!(
                "green ratio pi2 must be positive, got {} (cycle too short for the lost time?)",
                self.green_ratio_2
            )));
        }
        // (pi1 + pi2) T = T - 2 lost_time, testable to machine precision.
        let lhs = (self.green_ratio_1 + self.green_ratio_2) * self.cycle;
        let rhs = self.cycle - T::two() * self.lost_time;
        let tol = T::of(16.0) * T::epsilon() * self.cycle;
        if (lhs - rhs).abs() > tol {
            return Err(Error::InvalidTiming(format!(
                "(pi1+pi2)T = {lhs} violates T - 2*lost_time = {rhs}"
            )));
        }
        Ok(())
    }

    pub fn cycle(&self) -> T {
        self.cycle
    }

    pub fn lost_time(&self) -> T {
        self.lost_time
    }

    pub fn green_ratio_1(&self) -> T {
        self.green_ratio_1
    }

    pub fn green_ratio_2(&self) -> T {
        self.green_ratio_2
    }

    pub fn is_symmetric(&self) -> bool {
        self.green_ratio_1 == self.green_ratio_2
    }

    /// End of ring-1 green within the cycle, `π1 T`.
    pub fn green1_end(&self) -> T {
        self.green_ratio_1 * self.cycle
    }

    /// Start of ring-2 green within the cycle, `π1 T + Δ`.
    pub fn green2_start(&self) -> T {
        self.green_ratio_1 * self.cycle + self.lost_time
    }

    /// End of ring-2 green within the cycle, `T - Δ`.
    pub fn green2_end(&self) -> T {
        self.cycle - self.lost_time
    }

    /// Time folded into `[0, T)`.
    pub fn cycle_time(&self, t: T) -> T {
        let tau = t % self.cycle;
        if tau < T::zero() {
            tau + self.cycle
        } else {
            tau
        }
    }

    /// Interval of the cycle containing time `t` (intervals are closed on the
    /// left, open on the right).
    pub fn phase_at(&self, t: T) -> PhaseInterval {
        let tau = self.cycle_time(t);
        if tau < self.green1_end() {
            PhaseInterval::Green1
        } else if tau < self.green2_start() {
            PhaseInterval::Lost1
        } else if tau < self.green2_end() {
            PhaseInterval::Green2
        } else {
            PhaseInterval::Lost2
        }
    }

    /// Indicator pair `(δ1, δ2)`: ring-1 green iff `t mod T ∈ [0, π1 T)`,
    /// ring-2 green iff `t mod T ∈ [π1 T + Δ, T - Δ)`. Never both.
    pub fn indicators(&self, t: T) -> (bool, bool) {
        match self.phase_at(t) {
            PhaseInterval::Green1 => (true, false),
            PhaseInterval::Green2 => (false, true),
            PhaseInterval::Lost1 | PhaseInterval::Lost2 => (false, false),
        }
    }
}
