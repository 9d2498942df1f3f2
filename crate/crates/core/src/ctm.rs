//! Cell-transmission-model simulator of the same double-ring network.
//!
//! An independent finite-volume discretization used to cross-validate the
//! link-level results: each ring is a chain of cells of length `v_f Δt`
//! (unit CFL on the free-flow characteristic), interior boundaries pass
//! `min(demand, supply)`, and the junction applies the same FIFO diverge
//! rule gated by the signal.

use crate::error::{Error, Result};
use crate::mfd::{ForecastMethod, GridlockForecast, GridlockOutcome};
use crate::model::Scenario;
use crate::scalar::Scalar;

/// Paired ring discretization plus the adjusted time step.
#[derive(Debug, Clone, PartialEq)]
pub struct CtmState<T> {
    pub ring1: Vec<T>,
    pub ring2: Vec<T>,
    pub cell_length: T,
    /// Actual step used; `ctm_build` shrinks the requested one when the ring
    /// length is not an integer number of cells.
    pub dt: T,
    /// Steps taken since construction.
    pub steps: usize,
}

impl<T: Scalar> CtmState<T> {
    pub fn cells(&self) -> usize {
        self.ring1.len()
    }

    pub fn time(&self) -> T {
        T::of(self.steps as f64) * self.dt
    }

    pub fn ring_averages(&self) -> (T, T) {
        let n = T::of(self.cells() as f64);
        let sum1 = self.ring1.iter().fold(T::zero(), |a, &b| a + b);
        let sum2 = self.ring2.iter().fold(T::zero(), |a, &b| a + b);
        (sum1 / n, sum2 / n)
    }

    /// Total vehicle count over both rings.
    pub fn total_vehicles(&self) -> T {
        let sum1 = self.ring1.iter().fold(T::zero(), |a, &b| a + b);
        let sum2 = self.ring2.iter().fold(T::zero(), |a, &b| a + b);
        (sum1 + sum2) * self.cell_length
    }
}

/// Builds the paired-ring state with both rings uniform at the scenario's
/// initial densities. The cell length is `v_f Δt`; if the ring is not an
/// integer number of such cells, `Δt` is reduced to the nearest divisor.
pub fn ctm_build<T: Scalar>(scenario: &Scenario<T>, dt: T) -> Result<CtmState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Precondition("ctm dt must be positive".into()));
    }
    if scenario.fd.shock_speed() > scenario.fd.free_flow_speed() {
        return Err(Error::Precondition(
            "ctm stability needs w <= v_f (unit CFL on the free-flow branch)".into(),
        ));
    }
    let vf = scenario.fd.free_flow_speed();
    let travel = scenario.ring_length / vf;
    let cells = (travel / dt)
        .ceil()
        .to_usize()
        .ok_or_else(|| Error::Precondition(format!("dt {dt} yields no cell count")))?
        .max(3);
    let dt_actual = travel / T::of(cells as f64);
    let cell_length = vf * dt_actual;
    let k1 = scenario.k1_initial;
    let k2 = scenario.k2(k1);
    Ok(CtmState {
        ring1: vec![k1; cells],
        ring2: vec![k2; cells],
        cell_length,
        dt: dt_actual,
        steps: 0,
    })
}

/// Advances the state by one time step with the given indicator pair.
pub fn ctm_step<T: Scalar>(
    state: &mut CtmState<T>,
    deltas: (bool, bool),
    scenario: &Scenario<T>,
) -> Result<()> {
    let fd = &scenario.fd;
    let turning = &scenario.turning;
    let n = state.cells();
    let ratio = state.dt / state.cell_length;
    let one = T::one();
    let xi1 = turning.retain_1();
    let xi2 = turning.retain_2();

    // Junction fluxes first (they need the pre-step boundary cells).
    let g1 = if deltas.0 {
        fd.demand(state.ring1[n - 1])?
            .min(fd.supply(state.ring1[0])? / xi1)
            .min(fd.supply(state.ring2[0])? / (one - xi1))
    } else {
        T::zero()
    };
    let g2 = if deltas.1 {
        fd.demand(state.ring2[n - 1])?
            .min(fd.supply(state.ring2[0])? / xi2)
            .min(fd.supply(state.ring1[0])? / (one - xi2))
    } else {
        T::zero()
    };
    let retained_1 = g1 * xi1;
    let turned_1 = g1 - retained_1;
    let retained_2 = g2 * xi2;
    let turned_2 = g2 - retained_2;
    let in_1 = retained_1 + turned_2;
    let in_2 = turned_1 + retained_2;

    // Interior boundary fluxes: flux[i] crosses from cell i to cell i+1.
    let kj = fd.jam_density();
    let apply = |ring: &mut Vec<T>, junction_out: T, junction_in: T| -> Result<()> {
        let mut flux = Vec::with_capacity(n);
        for i in 0..n - 1 {
            flux.push(fd.demand(ring[i])?.min(fd.supply(ring[i + 1])?));
        }
        flux.push(junction_out);
        for i in 0..n {
            let inflow = if i == 0 { junction_in } else { flux[i - 1] };
            let updated = ring[i] + ratio * (inflow - flux[i]);
            // Unit CFL keeps densities in [0, k_j] exactly in real
            // arithmetic; rounding can overshoot by ulps, which would poison
            // the demand/supply domain checks downstream.
            let slack = T::epsilon() * kj * T::of(256.0);
            debug_assert!(
                updated >= -slack && updated <= kj + slack,
                "cell density {updated} far outside [0, kj]"
            );
            ring[i] = updated.max(T::zero()).min(kj);
        }
        Ok(())
    };
    apply(&mut state.ring1, g1, in_1)?;
    apply(&mut state.ring2, g2, in_2)?;
    state.steps += 1;
    Ok(())
}

/// Per-step record of a CTM run.
#[derive(Debug, Clone)]
pub struct CtmTrajectory<T> {
    pub dt: T,
    pub times: Vec<T>,
    pub k1_avg: Vec<T>,
    pub k2_avg: Vec<T>,
    /// Junction out-fluxes at each step.
    pub out_1: Vec<T>,
    pub out_2: Vec<T>,
}

/// Runs the CTM for a horizon, recording ring averages and junction fluxes
/// every step.
pub fn ctm_run<T: Scalar>(
    scenario: &Scenario<T>,
    dt: T,
    horizon: T,
) -> Result<(CtmTrajectory<T>, CtmState<T>)> {
    let mut state = ctm_build(scenario, dt)?;
    let steps = (horizon / state.dt)
        .round()
        .to_usize()
        .ok_or_else(|| Error::Precondition("horizon not representable".into()))?;
    let mut traj = CtmTrajectory {
        dt: state.dt,
        times: Vec::with_capacity(steps + 1),
        k1_avg: Vec::with_capacity(steps + 1),
        k2_avg: Vec::with_capacity(steps + 1),
        out_1: Vec::with_capacity(steps),
        out_2: Vec::with_capacity(steps),
    };
    let (a1, a2) = state.ring_averages();
    traj.times.push(T::zero());
    traj.k1_avg.push(a1);
    traj.k2_avg.push(a2);
    for _ in 0..steps {
        let t = state.time();
        let deltas = scenario.timing.indicators(t);
        // Record the junction fluxes this step will move.
        let (g1, g2) = junction_fluxes(&state, deltas, scenario)?;
        ctm_step(&mut state, deltas, scenario)?;
        let (a1, a2) = state.ring_averages();
        traj.times.push(state.time());
        traj.k1_avg.push(a1);
        traj.k2_avg.push(a2);
        traj.out_1.push(g1);
        traj.out_2.push(g2);
    }
    Ok((traj, state))
}

fn junction_fluxes<T: Scalar>(
    state: &CtmState<T>,
    deltas: (bool, bool),
    scenario: &Scenario<T>,
) -> Result<(T, T)> {
    let fd = &scenario.fd;
    let n = state.cells();
    let one = T::one();
    let xi1 = scenario.turning.retain_1();
    let xi2 = scenario.turning.retain_2();
    let g1 = if deltas.0 {
        fd.demand(state.ring1[n - 1])?
            .min(fd.supply(state.ring1[0])? / xi1)
            .min(fd.supply(state.ring2[0])? / (one - xi1))
    } else {
        T::zero()
    };
    let g2 = if deltas.1 {
        fd.demand(state.ring2[n - 1])?
            .min(fd.supply(state.ring2[0])? / xi2)
            .min(fd.supply(state.ring1[0])? / (one - xi2))
    } else {
        T::zero()
    };
    Ok((g1, g2))
}

/// Average network flow over the trailing cycle of a CTM trajectory,
/// `(Σ g1 Δt + Σ g2 Δt) / (2T)` over `[t_end - T, t_end]`.
pub fn ctm_average_flow<T: Scalar>(traj: &CtmTrajectory<T>, cycle: T) -> Result<T> {
    let end = *traj
        .times
        .last()
        .ok_or_else(|| Error::Precondition("empty trajectory".into()))?;
    if end < cycle {
        return Err(Error::Precondition(
            "need at least one cycle of history".into(),
        ));
    }
    let start = end - cycle;
    let mut total = T::zero();
    for (i, (&g1, &g2)) in traj.out_1.iter().zip(&traj.out_2).enumerate() {
        // Step i spans [times[i], times[i+1]).
        let t0 = traj.times[i];
        if t0 + traj.dt * T::half() >= start {
            total = total + (g1 + g2) * traj.dt;
        }
    }
    Ok(total / (T::two() * cycle))
}

/// Simulated CTM gridlock time on ring-average densities.
pub fn ctm_gridlock_time<T: Scalar>(
    scenario: &Scenario<T>,
    dt: T,
    sigma: T,
) -> Result<GridlockOutcome<T>> {
    if !(sigma > T::zero() && sigma < T::one()) {
        return Err(Error::Precondition(format!(
            "sigma must lie in (0,1), got {sigma}"
        )));
    }
    let threshold = (T::one() - sigma) * scenario.fd.jam_density();
    let mut state = ctm_build(scenario, dt)?;
    let cycle_steps = (scenario.timing.cycle() / state.dt)
        .round()
        .to_usize()
        .unwrap_or(1)
        .max(1);
    let guard_steps = cycle_steps * crate::mfd::GRIDLOCK_CYCLE_GUARD;
    loop {
        let (a1, a2) = state.ring_averages();
        if a1 >= threshold || a2 >= threshold {
            return Ok(GridlockOutcome::Reached(GridlockForecast {
                t_g: state.time(),
                sigma,
                k1_initial: scenario.k1_initial,
                method: ForecastMethod::Simulation,
            }));
        }
        if state.steps >= guard_steps {
            return Ok(GridlockOutcome::NotReached {
                cycles: crate::mfd::GRIDLOCK_CYCLE_GUARD,
            });
        }
        let deltas = scenario.timing.indicators(state.time());
        ctm_step(&mut state, deltas, scenario)?;
    }
}

/// Stationarity settings for the CTM flow measurement.
const CTM_SETTLE_REL: f64 = 1e-6;
const CTM_SETTLE_MAX_CYCLES: usize = 300;

/// CTM flow-density sample: settle from a uniform start at the scenario's
/// initial densities, then measure the junction throughput over one cycle.
/// Returns `(q, converged)`.
pub fn ctm_flow_at_stationarity<T: Scalar>(scenario: &Scenario<T>, dt: T) -> Result<(T, bool)> {
    let mut state = ctm_build(scenario, dt)?;
    let cycle = scenario.timing.cycle();
    let cycle_steps = (cycle / state.dt)
        .round()
        .to_usize()
        .ok_or_else(|| Error::Precondition("cycle not representable in steps".into()))?
        .max(1);
    let tol = T::of(CTM_SETTLE_REL) * scenario.fd.jam_density();
    let mut prev = state.ring_averages().0;
    let mut converged = false;
    for _ in 0..CTM_SETTLE_MAX_CYCLES {
        for _ in 0..cycle_steps {
            let deltas = scenario.timing.indicators(state.time());
            ctm_step(&mut state, deltas, scenario)?;
        }
        let now = state.ring_averages().0;
        if (now - prev).abs() < tol {
            converged = true;
            break;
        }
        prev = now;
    }
    // Measure one more cycle.
    let mut total = T::zero();
    for _ in 0..cycle_steps {
        let deltas = scenario.timing.indicators(state.time());
        let (g1, g2) = junction_fluxes(&state, deltas, scenario)?;
        total = total + (g1 + g2) * state.dt;
        ctm_step(&mut state, deltas, scenario)?;
    }
    Ok((total / (T::two() * cycle), converged))
}
