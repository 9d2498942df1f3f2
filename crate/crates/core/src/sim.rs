//! Event-driven integration of the switched affine dynamics.
//!
//! Within one region the orbit solves `dk1/dt = A k1 + B` in closed form and
//! is monotone, so region crossings are located analytically instead of by
//! bisection. A forward-Euler integrator of the raw conservation law serves
//! as an independent reference.

use crate::atlas::{
    coefficients, phase_partition, AffineCoefficients, Gammas, GreenPhase, RegionId, RegionInterval,
};
use crate::error::{Error, Result};
use crate::model::{diverge_fluxes, rhs, Scenario};
use crate::scalar::Scalar;

/// Region crossings allowed per cycle before the integrator declares
/// chattering. The atlas has at most four regions per phase, so a healthy
/// orbit needs far fewer.
pub const CROSSING_BUDGET: usize = 64;

/// Default number of interior samples recorded per green interval.
pub const SAMPLES_PER_GREEN: usize = 10;

/// One span of the orbit inside a single region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T> {
    pub t0: T,
    pub t1: T,
    pub region: RegionId,
    pub k1_start: T,
    pub k1_end: T,
    pub coeffs: AffineCoefficients<T>,
}

impl<T: Scalar> Segment<T> {
    /// Density at absolute time `t` inside the segment.
    pub fn k1_at(&self, t: T) -> T {
        advance(self.k1_start, &self.coeffs, t - self.t0)
    }

    pub fn duration(&self) -> T {
        self.t1 - self.t0
    }
}

/// Time-stamped sample of the trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub t: T,
    pub k1: T,
    pub region: RegionId,
    pub out_1: T,
    pub out_2: T,
}

/// Result of an exact simulation: the full segment decomposition, strided
/// samples, event times, and the ring-1 density at every cycle start.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub scenario: Scenario<T>,
    pub segments: Vec<Segment<T>>,
    pub samples: Vec<Sample<T>>,
    /// Phase switches and region crossings, in order.
    pub event_times: Vec<T>,
    /// `k1(nT)` for `n = 0..=n_cycles`.
    pub cycle_start_k1: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn end_time(&self) -> T {
        self.segments.last().map_or(T::zero(), |s| s.t1)
    }

    /// Density at any simulated time (piecewise closed form).
    pub fn k1_at(&self, t: T) -> Result<T> {
        if self.segments.is_empty() || t < T::zero() || t > self.end_time() {
            return Err(Error::Precondition(format!(
                "time {t} outside simulated range"
            )));
        }
        // Binary search for the segment containing t.
        let idx = self
            .segments
            .partition_point(|s| s.t1 < t)
            .min(self.segments.len() - 1);
        Ok(self.segments[idx].k1_at(t))
    }

    /// Full network state at a simulated time: density plus the indicator
    /// pair in force.
    pub fn state_at(&self, t: T) -> Result<crate::model::NetworkState<T>> {
        Ok(crate::model::NetworkState {
            time: t,
            k1: self.k1_at(t)?,
            deltas: self.scenario.timing.indicators(t),
        })
    }

    /// First time either ring's density reaches `threshold`, if ever.
    pub fn first_ring_at_or_above(&self, threshold: T) -> Option<T> {
        let two_k = T::two() * self.scenario.avg_density;
        for seg in &self.segments {
            // Ring 1 crossing: k1 rises to the threshold.
            if seg.k1_start >= threshold {
                return Some(seg.t0);
            }
            if let Some(tau) = time_to_reach(seg.k1_start, &seg.coeffs, threshold) {
                if seg.t0 + tau <= seg.t1 {
                    return Some(seg.t0 + tau);
                }
            }
            // Ring 2 crossing: k1 falls to 2k - threshold.
            let mirror = two_k - threshold;
            if seg.k1_start <= mirror {
                return Some(seg.t0);
            }
            if let Some(tau) = time_to_reach(seg.k1_start, &seg.coeffs, mirror) {
                if seg.t0 + tau <= seg.t1 {
                    return Some(seg.t0 + tau);
                }
            }
        }
        None
    }
}

/// Closed-form advance of the affine ODE by `dt`.
pub fn advance<T: Scalar>(k1: T, coeffs: &AffineCoefficients<T>, dt: T) -> T {
    if coeffs.a == T::zero() {
        k1 + coeffs.b * dt
    } else {
        let equilibrium = -coeffs.b / coeffs.a;
        equilibrium + (k1 - equilibrium) * (coeffs.a * dt).exp()
    }
}

/// Time for the orbit to reach `target`, or `None` if it never does.
fn time_to_reach<T: Scalar>(k1: T, coeffs: &AffineCoefficients<T>, target: T) -> Option<T> {
    if target == k1 {
        return Some(T::zero());
    }
    if coeffs.a == T::zero() {
        if coeffs.b == T::zero() {
            return None;
        }
        let tau = (target - k1) / coeffs.b;
        return (tau >= T::zero()).then_some(tau);
    }
    let equilibrium = -coeffs.b / coeffs.a;
    let ratio = (target - equilibrium) / (k1 - equilibrium);
    if !(ratio > T::zero()) {
        return None;
    }
    let tau = ratio.ln() / coeffs.a;
    (tau >= T::zero() && tau.is_finite()).then_some(tau)
}

/// Advances the orbit within one region interval for at most `dt`.
///
/// Returns the new density and, when the orbit reaches the interval boundary
/// strictly before `dt`, the exit time. The orbit is monotone inside a
/// region, so at most one boundary is reachable.
pub fn step_exact<T: Scalar>(
    k1: T,
    interval: &RegionInterval<T>,
    coeffs: &AffineCoefficients<T>,
    dt: T,
) -> (T, Option<T>) {
    let rate = coeffs.eval(k1);
    let bound = if rate > T::zero() {
        interval.hi
    } else if rate < T::zero() {
        interval.lo
    } else {
        return (k1, None); // equilibrium
    };
    match time_to_reach(k1, coeffs, bound) {
        Some(tau) if tau < dt => (bound, Some(tau)),
        _ => (advance(k1, coeffs, dt), None),
    }
}

/// Mutable bookkeeping for one cycle's march: output buffers plus the
/// crossing budget.
struct MarchLog<'a, T> {
    segments: &'a mut Vec<Segment<T>>,
    events: &'a mut Vec<T>,
    crossings: usize,
    cycle: usize,
}

/// Exact integrator for one scenario. Holds the per-phase region partitions,
/// which depend only on the average density.
#[derive(Debug, Clone)]
pub struct LqmSimulator<T> {
    scenario: Scenario<T>,
    gammas: Gammas<T>,
    partition_1: Vec<RegionInterval<T>>,
    partition_2: Vec<RegionInterval<T>>,
}

impl<T: Scalar> LqmSimulator<T> {
    pub fn new(scenario: &Scenario<T>) -> Result<Self> {
        let gammas = Gammas::new(&scenario.turning, &scenario.fd, scenario.ring_length);
        let partition_1 = phase_partition(
            scenario.avg_density,
            GreenPhase::One,
            &scenario.turning,
            &scenario.fd,
        )?;
        let partition_2 = phase_partition(
            scenario.avg_density,
            GreenPhase::Two,
            &scenario.turning,
            &scenario.fd,
        )?;
        Ok(Self {
            scenario: *scenario,
            gammas,
            partition_1,
            partition_2,
        })
    }

    pub fn scenario(&self) -> &Scenario<T> {
        &self.scenario
    }

    pub fn gammas(&self) -> &Gammas<T> {
        &self.gammas
    }

    pub fn partition(&self, phase: GreenPhase) -> &[RegionInterval<T>] {
        match phase {
            GreenPhase::One => &self.partition_1,
            GreenPhase::Two => &self.partition_2,
        }
    }

    fn locate(&self, phase: GreenPhase, k1: T, moving_down: bool) -> usize {
        let partition = self.partition(phase);
        let mut idx = partition
            .partition_point(|iv| iv.hi < k1)
            .min(partition.len() - 1);
        // On a shared edge, take the interval on the side of motion.
        if moving_down && idx > 0 && partition[idx].lo == k1 {
            idx -= 1;
        }
        if !moving_down && idx + 1 < partition.len() && partition[idx].hi == k1 {
            idx += 1;
        }
        idx
    }

    /// Marches one green interval ending exactly at `t_end`, appending
    /// segments to the log; returns the final density. Region changes count
    /// against the cycle budget. The caller supplies `t_end` (rather than a
    /// duration) so that the segment boundary is bit-identical to the next
    /// interval's start.
    fn march_green(
        &self,
        phase: GreenPhase,
        mut k1: T,
        t_start: T,
        t_end: T,
        log: &mut MarchLog<'_, T>,
    ) -> Result<T> {
        let moving_down = phase == GreenPhase::One;
        let partition = self.partition(phase);
        let mut idx = self.locate(phase, k1, moving_down);
        let mut t = t_start;
        loop {
            let interval = partition[idx];
            let coeffs = coefficients(
                interval.region,
                &self.gammas,
                self.scenario.avg_density,
                &self.scenario.fd,
            );
            let remaining = t_end - t;
            let (k1_new, exit) = step_exact(k1, &interval, &coeffs, remaining);
            let has_next = if moving_down {
                idx > 0
            } else {
                idx + 1 < partition.len()
            };
            match exit {
                Some(tau) if has_next => {
                    log.segments.push(Segment {
                        t0: t,
                        t1: t + tau,
                        region: interval.region,
                        k1_start: k1,
                        k1_end: k1_new,
                        coeffs,
                    });
                    t = t + tau;
                    log.events.push(t);
                    k1 = k1_new;
                    idx = if moving_down { idx - 1 } else { idx + 1 };
                    log.crossings += 1;
                    if log.crossings > CROSSING_BUDGET {
                        return Err(Error::ChatteringBudget {
                            cycle: log.cycle,
                            k1: k1.as_f64(),
                        });
                    }
                }
                _ => {
                    // Ran to the end of the green interval (a boundary at the
                    // band edge is an equilibrium, so no exit happens there).
                    let k1_final = advance(k1, &coeffs, remaining);
                    log.segments.push(Segment {
                        t0: t,
                        t1: t_end,
                        region: interval.region,
                        k1_start: k1,
                        k1_end: k1_final,
                        coeffs,
                    });
                    return Ok(k1_final);
                }
            }
        }
    }

    fn push_lost(&self, region: RegionId, k1: T, t0: T, t1: T, segments: &mut Vec<Segment<T>>) {
        if t1 > t0 {
            segments.push(Segment {
                t0,
                t1,
                region,
                k1_start: k1,
                k1_end: k1,
                coeffs: AffineCoefficients {
                    a: T::zero(),
                    b: T::zero(),
                },
            });
        }
    }

    /// Integrates exactly one cycle starting at phase-one onset, appending
    /// segments and events; returns `k1` at the next cycle start.
    pub fn one_cycle(
        &self,
        k1: T,
        cycle: usize,
        segments: &mut Vec<Segment<T>>,
        events: &mut Vec<T>,
    ) -> Result<T> {
        let timing = self.scenario.timing;
        let t0 = T::of(cycle as f64) * timing.cycle();
        // Interval boundaries computed once, so adjacent segments share
        // bit-identical endpoints.
        let t1 = t0 + timing.green1_end();
        let t2 = t0 + timing.green2_start();
        let t3 = t0 + timing.green2_end();
        let t4 = t0 + timing.cycle();
        let mut log = MarchLog {
            segments,
            events,
            crossings: 0,
            cycle,
        };

        let k1 = self.march_green(GreenPhase::One, k1, t0, t1, &mut log)?;
        log.events.push(t1);
        self.push_lost(RegionId::R9, k1, t1, t2, log.segments);
        if t2 > t1 {
            log.events.push(t2);
        }

        let k1 = self.march_green(GreenPhase::Two, k1, t2, t3, &mut log)?;
        self.push_lost(RegionId::R10, k1, t3, t4, log.segments);
        log.events.push(t3);
        Ok(k1)
    }

    /// One-cycle Poincaré return map anchored at phase-one onset.
    pub fn poincare(&self, k1: T) -> Result<T> {
        if !self.scenario.contains_k1(k1) {
            let (lo, hi) = self.scenario.k1_bounds();
            return Err(Error::DensityOutOfRange {
                what: "poincare map argument",
                value: k1.as_f64(),
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            });
        }
        let mut segments = Vec::with_capacity(12);
        let mut events = Vec::with_capacity(8);
        self.one_cycle(k1, 0, &mut segments, &mut events)
    }

    /// Full simulation over `n_cycles` cycles from the scenario's initial
    /// density, with strided samples.
    pub fn simulate(&self, n_cycles: usize) -> Result<Trajectory<T>> {
        if n_cycles == 0 {
            return Err(Error::Precondition("n_cycles must be at least 1".into()));
        }
        let mut segments = Vec::new();
        let mut events = Vec::new();
        let mut cycle_start_k1 = Vec::with_capacity(n_cycles + 1);
        let mut k1 = self.scenario.k1_initial;
        cycle_start_k1.push(k1);
        for cycle in 0..n_cycles {
            k1 = self.one_cycle(k1, cycle, &mut segments, &mut events)?;
            cycle_start_k1.push(k1);
        }
        let samples = self.build_samples(&segments)?;
        Ok(Trajectory {
            scenario: self.scenario,
            segments,
            samples,
            event_times: events,
            cycle_start_k1,
        })
    }

    fn build_samples(&self, segments: &[Segment<T>]) -> Result<Vec<Sample<T>>> {
        let timing = &self.scenario.timing;
        let mut samples = Vec::new();
        let stride_1 = timing.green1_end() / T::of(SAMPLES_PER_GREEN as f64);
        let stride_2 =
            (timing.green2_end() - timing.green2_start()) / T::of(SAMPLES_PER_GREEN as f64);
        for seg in segments {
            self.push_sample(&mut samples, seg, seg.t0)?;
            let stride = match seg.region.green_phase() {
                Some(GreenPhase::One) => stride_1,
                Some(GreenPhase::Two) => stride_2,
                None => continue,
            };
            if stride <= T::zero() {
                continue;
            }
            // Interior points on the global stride grid of this green.
            let mut n = (seg.t0 / stride).ceil();
            loop {
                let t = n * stride;
                if t >= seg.t1 {
                    break;
                }
                if t > seg.t0 {
                    self.push_sample(&mut samples, seg, t)?;
                }
                n = n + T::one();
            }
        }
        if let Some(last) = segments.last() {
            self.push_sample(&mut samples, last, last.t1)?;
        }
        Ok(samples)
    }

    fn push_sample(&self, samples: &mut Vec<Sample<T>>, seg: &Segment<T>, t: T) -> Result<()> {
        let k1 = seg.k1_at(t);
        let deltas = match seg.region.green_phase() {
            Some(GreenPhase::One) => (true, false),
            Some(GreenPhase::Two) => (false, true),
            None => (false, false),
        };
        let flux = diverge_fluxes(
            k1,
            self.scenario.avg_density,
            deltas,
            &self.scenario.turning,
            &self.scenario.fd,
        )?;
        samples.push(Sample {
            t,
            k1,
            region: seg.region,
            out_1: flux.out_1,
            out_2: flux.out_2,
        });
        Ok(())
    }
}

/// Convenience wrapper: simulate `n_cycles` from the scenario's initial
/// density.
pub fn simulate<T: Scalar>(scenario: &Scenario<T>, n_cycles: usize) -> Result<Trajectory<T>> {
    LqmSimulator::new(scenario)?.simulate(n_cycles)
}

/// One-cycle numerical Poincaré map `k1 -> k1(t + T)`.
pub fn poincare_numeric<T: Scalar>(scenario: &Scenario<T>, k1: T) -> Result<T> {
    LqmSimulator::new(scenario)?.poincare(k1)
}

/// Average network flow over the trailing window `[t - T, t]`:
/// `q(t) = (∫ g1 + ∫ g2) / (2T)`.
///
/// By ring-1 conservation, `∫ g1 dt = L Δk1 / (1 - ξ1)` over any phase-one
/// span and `∫ g2 dt = L Δk1 / (1 - ξ2)` over any phase-two span, so the
/// integrals are evaluated exactly from the segment decomposition.
pub fn average_flow<T: Scalar>(trajectory: &Trajectory<T>, t: T) -> Result<T> {
    let cycle = trajectory.scenario.timing.cycle();
    if t < cycle || t > trajectory.end_time() {
        return Err(Error::Precondition(format!(
            "average flow needs one full cycle of history inside the simulation, got t={t}"
        )));
    }
    let window_start = t - cycle;
    let length = trajectory.scenario.ring_length;
    let one = T::one();
    let xi1 = trajectory.scenario.turning.retain_1();
    let xi2 = trajectory.scenario.turning.retain_2();
    let mut total = T::zero();
    for seg in &trajectory.segments {
        if seg.t1 <= window_start || seg.t0 >= t {
            continue;
        }
        let a = seg.t0.max(window_start);
        let b = seg.t1.min(t);
        let k1_a = seg.k1_at(a);
        let k1_b = seg.k1_at(b);
        match seg.region.green_phase() {
            Some(GreenPhase::One) => total = total + length * (k1_a - k1_b) / (one - xi1),
            Some(GreenPhase::Two) => total = total + length * (k1_b - k1_a) / (one - xi2),
            None => {}
        }
    }
    Ok(total / (T::two() * cycle))
}

/// Forward-Euler trajectory of the raw conservation law, integrating both
/// ring densities independently. Serves as an oracle for the exact engine
/// and for the density-conservation check.
#[derive(Debug, Clone)]
pub struct EulerTrajectory<T> {
    pub dt: T,
    pub times: Vec<T>,
    pub k1: Vec<T>,
    pub k2: Vec<T>,
}

/// Forward-Euler integration of `dk1/dt = (f1 - g1)/L`, `dk2/dt = (f2 - g2)/L`
/// evaluated directly from the diverge model, with no region machinery.
pub fn euler_reference<T: Scalar>(
    scenario: &Scenario<T>,
    dt: T,
    horizon: T,
) -> Result<EulerTrajectory<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Precondition("dt must be positive".into()));
    }
    let steps = (horizon / dt).round().to_usize().ok_or_else(|| {
        Error::Precondition(format!("horizon {horizon} not representable in steps"))
    })?;
    let length = scenario.ring_length;
    let mut k1 = scenario.k1_initial;
    let mut k2 = scenario.k2(k1);
    let mut out = EulerTrajectory {
        dt,
        times: Vec::with_capacity(steps + 1),
        k1: Vec::with_capacity(steps + 1),
        k2: Vec::with_capacity(steps + 1),
    };
    out.times.push(T::zero());
    out.k1.push(k1);
    out.k2.push(k2);
    for step in 0..steps {
        let t = T::of(step as f64) * dt;
        let deltas = scenario.timing.indicators(t);
        let flux = diverge_fluxes(
            k1,
            scenario.avg_density,
            deltas,
            &scenario.turning,
            &scenario.fd,
        )?;
        k1 = k1 + dt * (flux.in_1 - flux.out_1) / length;
        k2 = k2 + dt * (flux.in_2 - flux.out_2) / length;
        out.times.push(T::of((step + 1) as f64) * dt);
        out.k1.push(k1);
        out.k2.push(k2);
    }
    Ok(out)
}

/// Direct evaluation of the system right-hand side at a time instant, used
/// by callers that want the ODE form without the atlas.
pub fn rhs_at<T: Scalar>(scenario: &Scenario<T>, t: T, k1: T) -> Result<T> {
    rhs(
        k1,
        scenario.avg_density,
        scenario.timing.indicators(t),
        &scenario.turning,
        &scenario.fd,
        scenario.ring_length,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::TriangularFd;
    use crate::model::TurningPolicy;
    use crate::signal::SignalTiming;
    use approx::assert_relative_eq;

    fn scenario(xi: f64, cycle: f64, lost: f64, k: f64, k1_0: f64) -> Scenario<f64> {
        let fd = TriangularFd::new(30.0 / 3600.0, 7.5 / 3600.0, 150.0).unwrap();
        Scenario::new(
            fd,
            0.25,
            SignalTiming::symmetric(cycle, lost).unwrap(),
            TurningPolicy::uniform(xi).unwrap(),
            k,
            k1_0,
        )
        .unwrap()
    }

    #[test]
    fn lost_time_keeps_density() {
        let sc = scenario(0.7, 30.0, 2.0, 40.0, 40.0);
        let sim = LqmSimulator::new(&sc).unwrap();
        let traj = sim.simulate(2).unwrap();
        for seg in &traj.segments {
            if seg.region == RegionId::R9 || seg.region == RegionId::R10 {
                assert_eq!(seg.k1_start, seg.k1_end);
            }
        }
    }

    #[test]
    fn region_one_decay_is_exponential() {
        let sc = scenario(0.7, 4.0, 0.25, 15.0, 20.0);
        let sim = LqmSimulator::new(&sc).unwrap();
        let g1 = sim.gammas().g1;
        let green = sc.timing.green1_end();
        let mut segments = Vec::new();
        let mut events = Vec::new();
        let mut log = MarchLog {
            segments: &mut segments,
            events: &mut events,
            crossings: 0,
            cycle: 0,
        };
        let k1_end = sim
            .march_green(GreenPhase::One, 20.0, 0.0, green, &mut log)
            .unwrap();
        assert_relative_eq!(k1_end, 20.0 * (-g1 * green).exp(), max_relative = 1e-13);
    }

    #[test]
    fn total_jam_is_constant() {
        let sc = scenario(0.7, 30.0, 2.0, 150.0, 150.0);
        let traj = simulate(&sc, 5).unwrap();
        for k in &traj.cycle_start_k1 {
            assert_eq!(*k, 150.0);
        }
        assert_relative_eq!(average_flow(&traj, traj.end_time()).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_low_density_fixed_point() {
        // Pair (1,5): k1(nT) converges to 2k / (1 + e^{-gamma1 pi T}).
        let sc = scenario(0.7, 5.0, 0.25, 20.0, 14.0);
        let sim = LqmSimulator::new(&sc).unwrap();
        let traj = sim.simulate(600).unwrap();
        let pi_t = sc.timing.green1_end();
        let expected = 2.0 * 20.0 / (1.0 + (-sim.gammas().g1 * pi_t).exp());
        assert_relative_eq!(
            *traj.cycle_start_k1.last().unwrap(),
            expected,
            max_relative = 1e-10
        );
        // Once periodic, it stays periodic.
        let n = traj.cycle_start_k1.len();
        let tail = traj.cycle_start_k1[n - 3];
        assert_relative_eq!(traj.cycle_start_k1[n - 1], tail, epsilon = 1e-10 * 150.0);
    }

    #[test]
    fn congested_high_retention_gridlocks() {
        let sc = scenario(0.7, 30.0, 2.0, 85.0, 130.0);
        let traj = simulate(&sc, 400).unwrap();
        let last = *traj.cycle_start_k1.last().unwrap();
        assert!(last > 149.9, "expected gridlock, got k1={last}");
        // Monotone growth cycle over cycle.
        for w in traj.cycle_start_k1.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn phase_switch_events_exact() {
        let sc = scenario(0.7, 30.0, 2.0, 60.0, 70.0);
        let traj = simulate(&sc, 3).unwrap();
        let t = &sc.timing;
        for n in 0..3 {
            let base = n as f64 * t.cycle();
            for offset in [t.green1_end(), t.green2_start(), t.green2_end()] {
                let expect = base + offset;
                assert!(
                    traj.event_times.contains(&expect),
                    "missing event at {expect}"
                );
            }
        }
    }

    #[test]
    fn greens_are_monotone() {
        let sc = scenario(0.55, 60.0, 4.0, 65.0, 80.0);
        let traj = simulate(&sc, 10).unwrap();
        for seg in &traj.segments {
            match seg.region.green_phase() {
                Some(GreenPhase::One) => assert!(seg.k1_end <= seg.k1_start + 1e-12),
                Some(GreenPhase::Two) => assert!(seg.k1_end >= seg.k1_start - 1e-12),
                None => {}
            }
        }
    }

    #[test]
    fn average_flow_examples() {
        // Stationary capacity pair (2,6): q = pi * C.
        let sc = scenario(0.7, 5.0, 0.25, 45.0, 40.0);
        let traj = simulate(&sc, 60).unwrap();
        let q = average_flow(&traj, traj.end_time()).unwrap();
        let pi = sc.timing.green_ratio_1();
        assert_relative_eq!(q, pi * sc.fd.capacity(), max_relative = 1e-9);

        // Stationary uncongested state: q close to pi * v_f * k.
        let sc = scenario(0.7, 5.0, 0.25, 20.0, 20.0);
        let traj = simulate(&sc, 200).unwrap();
        let q = average_flow(&traj, traj.end_time()).unwrap();
        assert_relative_eq!(q, pi * sc.fd.free_flow_speed() * 20.0, max_relative = 1e-3);
        // Domain error below one cycle of history.
        assert!(average_flow(&traj, 1.0).is_err());
    }

    #[test]
    fn poincare_identity_in_capacity_band() {
        let sc = scenario(0.7, 5.0, 0.25, 45.0, 40.0);
        let p = poincare_numeric(&sc, 40.0).unwrap();
        assert_relative_eq!(p, 40.0, epsilon = 1e-12 * 150.0);
        // Jammed network maps to itself.
        let sc = scenario(0.7, 5.0, 0.25, 150.0, 150.0);
        assert_eq!(poincare_numeric(&sc, 150.0).unwrap(), 150.0);
    }

    #[test]
    fn short_cycle_pair_15_matches_table() {
        let sc = scenario(0.7, 5.0, 0.25, 20.0, 16.0);
        let sim = LqmSimulator::new(&sc).unwrap();
        let pi_t = sc.timing.green1_end();
        let g1 = sim.gammas().g1;
        let expected = 2.0 * 20.0 * (1.0 - (-g1 * pi_t).exp()) + 16.0 * (-2.0 * g1 * pi_t).exp();
        assert_relative_eq!(sim.poincare(16.0).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn euler_matches_exact_engine() {
        let sc = scenario(0.7, 30.0, 2.0, 60.0, 90.0);
        let horizon = 20.0 * sc.timing.cycle();
        let euler = euler_reference(&sc, 0.01, horizon).unwrap();
        let traj = simulate(&sc, 20).unwrap();
        let mut max_gap: f64 = 0.0;
        for (i, &t) in euler.times.iter().enumerate() {
            let exact = traj.k1_at(t).unwrap();
            max_gap = max_gap.max((exact - euler.k1[i]).abs());
        }
        assert!(
            max_gap < 1e-3 * 150.0,
            "euler deviates from exact engine by {max_gap}"
        );
    }

    #[test]
    fn degenerate_all_lost_time_is_constant() {
        // lost time = T/2 leaves no green at all; timing construction
        // rejects it, so emulate with indicators: a scenario whose greens
        // have zero net effect is the jammed one covered above. Here check
        // the Euler engine holds densities exactly when both greens are
        // blocked by a jammed opposite ring.
        let sc = scenario(0.5, 30.0, 2.0, 150.0, 150.0);
        let euler = euler_reference(&sc, 0.01, 60.0).unwrap();
        assert!(euler.k1.iter().all(|&v| v == 150.0));
        assert!(euler.k2.iter().all(|&v| v == 150.0));
    }

    #[test]
    fn gridlock_crossing_detection() {
        let sc = scenario(0.7, 30.0, 2.0, 85.0, 130.0);
        let traj = simulate(&sc, 600).unwrap();
        let threshold = 0.99 * 150.0;
        let t = traj.first_ring_at_or_above(threshold).unwrap();
        let k1 = traj.k1_at(t).unwrap();
        assert_relative_eq!(k1, threshold, max_relative = 1e-9);
        // Before the crossing both rings are below the threshold.
        let probe = t - 5.0;
        let k1_before = traj.k1_at(probe).unwrap();
        let k2_before = 2.0 * 85.0 - k1_before;
        assert!(k1_before < threshold && k2_before < threshold);
    }
}
