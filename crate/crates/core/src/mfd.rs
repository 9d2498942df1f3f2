//! Macroscopic fundamental diagrams and gridlock-time predictions.
//!
//! The closed-form MFD branches are the short-cycle limits of the
//! stationary-state flows; the numeric MFD runs the stationary-state scan at
//! every density and measures the exact average flow of each state. Gridlock
//! times come both from the log-formula of the jam-bound return map and from
//! exact simulation.

use crate::atlas::{Gammas, RegionPair};
use crate::error::{Error, Result};
use crate::fd::TriangularFd;
use crate::model::Scenario;
use crate::poincare::{is_gridlock_pair, scan_stationary_states, Stability, StationaryState};
use crate::scalar::Scalar;
use crate::sim::{advance, average_flow, LqmSimulator};

/// Stability annotation of an MFD point; continuum marks samples drawn from
/// an identity-map band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfdStability {
    AsymptoticallyStable,
    LyapunovStable,
    Unstable,
    Continuum,
}

impl MfdStability {
    pub fn label(&self) -> &'static str {
        match self {
            MfdStability::AsymptoticallyStable => "asymptotically-stable",
            MfdStability::LyapunovStable => "lyapunov-stable",
            MfdStability::Unstable => "unstable",
            MfdStability::Continuum => "continuum",
        }
    }

    fn from_stability(s: Stability) -> Self {
        match s {
            Stability::AsymptoticallyStable => MfdStability::AsymptoticallyStable,
            Stability::LyapunovStable => MfdStability::LyapunovStable,
            Stability::Unstable => MfdStability::Unstable,
        }
    }
}

/// How an MFD point was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfdSource {
    ClosedForm,
    ScanSimulate,
}

impl MfdSource {
    pub fn label(&self) -> &'static str {
        match self {
            MfdSource::ClosedForm => "closed-form",
            MfdSource::ScanSimulate => "scan+simulate",
        }
    }
}

/// One `(k, q)` sample of the network flow-density relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfdPoint<T> {
    pub k: T,
    pub q: T,
    pub stability: MfdStability,
    pub source: MfdSource,
    /// Stationary ring-1 density behind this flow value; an interval when
    /// the state is a continuum or a capacity band.
    pub k1_lo: T,
    pub k1_hi: T,
    /// False when the underlying simulation did not reach stationarity.
    pub converged: bool,
}

fn point<T: Scalar>(k: T, q: T, stability: MfdStability, k1_lo: T, k1_hi: T) -> MfdPoint<T> {
    MfdPoint {
        k,
        q,
        stability,
        source: MfdSource::ClosedForm,
        k1_lo,
        k1_hi,
        converged: true,
    }
}

/// The `k1` interval of the capacity band (regions 2 and 6 both active) at
/// average density `k`, if nonempty.
fn capacity_band<T: Scalar>(fd: &TriangularFd<T>, xi: T, k: T) -> Option<(T, T)> {
    let kc = fd.critical_density();
    let kj = fd.jam_density();
    let one = T::one();
    let two = T::two();
    let lo = kc
        .max(two * k - xi * kj - (one - xi) * kc)
        .max(two * k - kj + xi * (kj - kc));
    let hi = (kj - xi * (kj - kc))
        .min(kj - (one - xi) * (kj - kc))
        .min(two * k - kc);
    (lo <= hi).then_some((lo, hi))
}

/// Closed-form MFD branch values at density `k`.
///
/// Multivalued bands yield several points. For `ξ = 0.5` inside the
/// multivalued band the flow depends on the stationary `k1`, which must then
/// be supplied; its admissible window is used exactly as printed and an
/// empty window yields no point.
pub fn mfd_closed_form<T: Scalar>(
    fd: &TriangularFd<T>,
    pi: T,
    xi: T,
    k: T,
    k1: Option<T>,
) -> Result<Vec<MfdPoint<T>>> {
    if !(pi > T::zero() && pi <= T::half()) {
        return Err(Error::Precondition(format!(
            "green ratio must lie in (0, 0.5], got {pi}"
        )));
    }
    if !(xi > T::zero() && xi < T::one()) {
        return Err(Error::InvalidTurning(format!(
            "retaining ratio must lie in (0,1), got {xi}"
        )));
    }
    let kc = fd.critical_density();
    let kj = fd.jam_density();
    if k < T::zero() || k > kj {
        return Err(Error::DensityOutOfRange {
            what: "mfd density",
            value: k.as_f64(),
            lo: 0.0,
            hi: kj.as_f64(),
        });
    }
    let cap = fd.capacity();
    let vf = fd.free_flow_speed();
    let one = T::one();
    let two = T::two();
    let half = T::half();
    let mut out: Vec<MfdPoint<T>> = Vec::new();

    // Free-flow branch, common to all regimes.
    if k <= kc {
        out.push(point(
            k,
            pi * vf * k,
            MfdStability::AsymptoticallyStable,
            k,
            k,
        ));
        return Ok(out);
    }

    match xi.partial_cmp(&half).expect("finite xi") {
        std::cmp::Ordering::Greater => {
            // Capacity plateau.
            if k <= kj - xi * (kj - kc) {
                let (lo, hi) = capacity_band(fd, xi, k).unwrap_or((k, k));
                out.push(point(k, pi * cap, MfdStability::LyapunovStable, lo, hi));
            }
            // Stable congested branch, realized by the mirror states with
            // one ring uncongested and the other supply-bound.
            let mv_lo = ((one - xi) * kj + (one + xi) * kc) * half;
            if k > mv_lo && k <= kj * half {
                let q = pi * cap * (kj - two * k) / (xi * (kj - kc) - kc);
                if q >= T::zero() {
                    let rho = kc / (xi * (kj - kc));
                    let k1_low = (kj - two * k) * rho / (one - rho);
                    let k1_high = (two * k - kj * rho) / (one - rho);
                    out.push(point(
                        k,
                        q,
                        MfdStability::AsymptoticallyStable,
                        k1_low,
                        k1_low,
                    ));
                    out.push(point(
                        k,
                        q,
                        MfdStability::AsymptoticallyStable,
                        k1_high,
                        k1_high,
                    ));
                }
            }
            // Unstable congested branch.
            if k > kj - xi * (kj - kc) && k < kj {
                let q = pi * cap * (kj - k) / (xi * (kj - kc));
                if q >= T::zero() {
                    out.push(point(k, q, MfdStability::Unstable, k, k));
                }
            }
            // Gridlock branch: stable for high retention.
            if k >= kj * half {
                out.push(point(
                    k,
                    T::zero(),
                    MfdStability::AsymptoticallyStable,
                    kj,
                    kj,
                ));
                out.push(point(
                    k,
                    T::zero(),
                    MfdStability::AsymptoticallyStable,
                    two * k - kj,
                    two * k - kj,
                ));
            }
        }
        std::cmp::Ordering::Less => {
            if k <= kj - (one - xi) * (kj - kc) {
                let (lo, hi) = capacity_band(fd, xi, k).unwrap_or((k, k));
                out.push(point(k, pi * cap, MfdStability::LyapunovStable, lo, hi));
            }
            if k > kj - (one - xi) * (kj - kc) && k < kj {
                let q = pi * cap * (kj - k) / ((one - xi) * (kj - kc));
                if q >= T::zero() {
                    out.push(point(k, q, MfdStability::AsymptoticallyStable, k, k));
                }
            }
            // Gridlock states exist but are unstable for low retention.
            if k >= kj * half {
                out.push(point(k, T::zero(), MfdStability::Unstable, kj, kj));
                out.push(point(
                    k,
                    T::zero(),
                    MfdStability::Unstable,
                    two * k - kj,
                    two * k - kj,
                ));
            }
        }
        std::cmp::Ordering::Equal => {
            let plateau_end = (kj + T::of(3.0) * kc) / T::of(4.0);
            if k <= plateau_end {
                let (lo, hi) = capacity_band(fd, xi, k).unwrap_or((k, k));
                out.push(point(k, pi * cap, MfdStability::LyapunovStable, lo, hi));
            } else {
                // Flow depends on which stationary k1 the network sits at.
                let window_lo =
                    (kc * (kj - two * k) / (kj * half - T::of(1.5) * kc)).max(two * k - kj);
                let window_hi = (two * k - (kj + kc) * half).max(k);
                if window_lo <= window_hi {
                    let k1 = k1.ok_or_else(|| {
                        Error::Precondition(format!(
                            "xi = 0.5 multivalued band at k={k}: a stationary k1 in \
                             [{window_lo}, {window_hi}] must be supplied"
                        ))
                    })?;
                    if k1 >= window_lo && k1 <= window_hi {
                        let q = pi * cap * (kj - two * k + k1) / ((kj - kc) * half);
                        if q >= T::zero() {
                            out.push(point(k, q, MfdStability::LyapunovStable, k1, k1));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Midpoint approximation of the stationary average flow,
/// `q ≈ π (g1(k1*) + g1(k1 at green-one end)) / 2`, with the pair-specific
/// out-flux form.
pub fn average_flow_approx<T: Scalar>(
    pair: RegionPair,
    k1_star: T,
    scenario: &Scenario<T>,
) -> Result<T> {
    let fd = &scenario.fd;
    let kc = fd.critical_density();
    let kj = fd.jam_density();
    let cap = fd.capacity();
    let vf = fd.free_flow_speed();
    let xi = scenario.turning.retain_1();
    let pi = scenario.timing.green_ratio_1();
    let pi_t = scenario.timing.green1_end();
    let two_k = T::two() * scenario.avg_density;
    let one = T::one();

    let gammas = Gammas::new(&scenario.turning, fd, scenario.ring_length);
    let coeff_i = crate::atlas::coefficients(pair.first, &gammas, scenario.avg_density, fd);
    let k1_mid = advance(k1_star, &coeff_i, pi_t);

    // Out-flux during green one as a function of k1, by the first region of
    // the pair.
    let g1 = |x: T| -> T {
        match pair.first.index() {
            1 => vf * x,
            2 => cap,
            3 => cap * (kj - x) / (xi * (kj - kc)),
            4 => cap * (kj - two_k + x) / ((one - xi) * (kj - kc)),
            _ => T::zero(),
        }
    };
    // Gridlock states move nothing.
    let eps = T::of(1e-9) * kj;
    if is_gridlock_pair(pair)
        && ((k1_star - kj).abs() <= eps || (k1_star - (two_k - kj)).abs() <= eps)
    {
        return Ok(T::zero());
    }
    Ok(pi * (g1(k1_star) + g1(k1_mid)) * T::half())
}

/// Cycle-convergence settings for the numeric MFD: stationarity threshold
/// `1e-9 k_j` on the cycle-to-cycle change, 500 cycles maximum.
const STATIONARITY_REL: f64 = 1e-9;
const STATIONARITY_MAX_CYCLES: usize = 500;

/// Number of samples used to trace a continuum of stationary states.
pub const CONTINUUM_SAMPLES: usize = 9;

/// Simulates from `k1_0` until the cycle map stops moving, then measures the
/// exact average flow over one final cycle.
fn settle_and_measure<T: Scalar>(scenario: &Scenario<T>, k1_0: T) -> Result<(T, bool)> {
    let mut sc = *scenario;
    sc.k1_initial = k1_0;
    let sim = LqmSimulator::new(&sc)?;
    let tol = T::of(STATIONARITY_REL) * sc.fd.jam_density();
    let mut k1 = k1_0;
    let mut converged = false;
    for _ in 0..STATIONARITY_MAX_CYCLES {
        let next = sim.poincare(k1)?;
        let done = (next - k1).abs() < tol;
        k1 = next;
        if done {
            converged = true;
            break;
        }
    }
    let mut measured = sc;
    measured.k1_initial = k1;
    let traj = LqmSimulator::new(&measured)?.simulate(1)?;
    let q = average_flow(&traj, measured.timing.cycle())?;
    Ok((q, converged))
}

/// Numeric MFD at one density: stationary-state scan followed by exact flow
/// measurement of every state. Continuum states are traced at
/// [`CONTINUUM_SAMPLES`] evenly spaced densities.
pub fn mfd_numeric_at<T: Scalar>(
    scenario_template: &Scenario<T>,
    k: T,
    dk: T,
    tol: T,
    n_max: usize,
) -> Result<Vec<MfdPoint<T>>> {
    let mut scenario = *scenario_template;
    scenario.avg_density = k;
    let (lo, hi) = scenario.k1_bounds();
    scenario.k1_initial = k.max(lo).min(hi);
    if hi <= lo {
        // Degenerate band: k = 0 (empty) or k = kj (jam); flow is zero.
        return Ok(vec![MfdPoint {
            k,
            q: T::zero(),
            stability: if k > T::zero() {
                MfdStability::AsymptoticallyStable
            } else {
                MfdStability::LyapunovStable
            },
            source: MfdSource::ScanSimulate,
            k1_lo: lo,
            k1_hi: hi,
            converged: true,
        }]);
    }
    let scan = scan_stationary_states(&scenario, dk, tol, n_max)?;
    let mut out = Vec::new();
    for state in &scan.states {
        match state {
            StationaryState::Point(fp) => {
                let (q, converged) = settle_and_measure(&scenario, fp.k1_star)?;
                out.push(MfdPoint {
                    k,
                    q,
                    stability: MfdStability::from_stability(fp.stability),
                    source: MfdSource::ScanSimulate,
                    k1_lo: fp.k1_star,
                    k1_hi: fp.k1_star,
                    converged,
                });
            }
            StationaryState::Continuum { lo, hi } => {
                for s in 0..CONTINUUM_SAMPLES {
                    let frac = T::of(s as f64) / T::of((CONTINUUM_SAMPLES - 1) as f64);
                    let k1 = *lo + (*hi - *lo) * frac;
                    let (q, converged) = settle_and_measure(&scenario, k1)?;
                    out.push(MfdPoint {
                        k,
                        q,
                        stability: MfdStability::Continuum,
                        source: MfdSource::ScanSimulate,
                        k1_lo: k1,
                        k1_hi: k1,
                        converged,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Numeric MFD over a density grid, sorted by `(k, k1)`.
pub fn mfd_numeric<T: Scalar>(
    scenario_template: &Scenario<T>,
    k_grid: &[T],
    dk: T,
    tol: T,
    n_max: usize,
) -> Result<Vec<MfdPoint<T>>> {
    let mut out = Vec::new();
    for &k in k_grid {
        out.extend(mfd_numeric_at(scenario_template, k, dk, tol, n_max)?);
    }
    Ok(out)
}

/// How a gridlock time was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecastMethod {
    Formula,
    Simulation,
}

impl ForecastMethod {
    pub fn label(&self) -> &'static str {
        match self {
            ForecastMethod::Formula => "formula",
            ForecastMethod::Simulation => "simulation",
        }
    }
}

/// Predicted time for a ring to reach `(1 - σ) k_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridlockForecast<T> {
    pub t_g: T,
    pub sigma: T,
    pub k1_initial: T,
    pub method: ForecastMethod,
}

/// Outcome of a simulated gridlock probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridlockOutcome<T> {
    Reached(GridlockForecast<T>),
    /// The threshold was not hit within the cycle guard.
    NotReached {
        cycles: usize,
    },
}

/// Log-formula gridlock time of the jam-bound band:
/// `T_g = ln((k_j - k1(0)) / (σ k_j)) / (π (γ3 - γ2))`.
///
/// Requires `ξ > 0.5`, where the jam fixed point attracts (`γ2 < γ3`).
pub fn gridlock_time_formula<T: Scalar>(
    k1_0: T,
    xi: T,
    pi: T,
    fd: &TriangularFd<T>,
    ring_length: T,
    sigma: T,
) -> Result<GridlockForecast<T>> {
    if !(xi > T::half() && xi < T::one()) {
        return Err(Error::Precondition(format!(
            "gridlock-time formula needs xi in (0.5, 1), got {xi}"
        )));
    }
    if !(sigma > T::zero() && sigma < T::one()) {
        return Err(Error::Precondition(format!(
            "sigma must lie in (0,1), got {sigma}"
        )));
    }
    let kj = fd.jam_density();
    if k1_0 < T::zero() || k1_0 >= kj {
        return Err(Error::DensityOutOfRange {
            what: "gridlock initial density",
            value: k1_0.as_f64(),
            lo: 0.0,
            hi: kj.as_f64(),
        });
    }
    let kc = fd.critical_density();
    let vf = fd.free_flow_speed();
    let gamma3 = vf * kc / (ring_length * (kj - kc));
    let gamma2 = (T::one() - xi) * vf * kc / (ring_length * xi * (kj - kc));
    let t_g = ((kj - k1_0) / (sigma * kj)).ln() / (pi * (gamma3 - gamma2));
    Ok(GridlockForecast {
        t_g: t_g.max(T::zero()),
        sigma,
        k1_initial: k1_0,
        method: ForecastMethod::Formula,
    })
}

/// Guard on the simulated gridlock probe.
pub const GRIDLOCK_CYCLE_GUARD: usize = 10_000;

/// Exact-simulation gridlock time: first instant either ring density reaches
/// `(1 - σ) k_j`.
pub fn gridlock_time_simulated<T: Scalar>(
    scenario: &Scenario<T>,
    sigma: T,
) -> Result<GridlockOutcome<T>> {
    if !(sigma > T::zero() && sigma < T::one()) {
        return Err(Error::Precondition(format!(
            "sigma must lie in (0,1), got {sigma}"
        )));
    }
    let threshold = (T::one() - sigma) * scenario.fd.jam_density();
    let sim = LqmSimulator::new(scenario)?;
    let two_k = T::two() * scenario.avg_density;
    let mut k1 = scenario.k1_initial;

    // Immediate hit at t = 0.
    if k1 >= threshold || two_k - k1 >= threshold {
        return Ok(GridlockOutcome::Reached(GridlockForecast {
            t_g: T::zero(),
            sigma,
            k1_initial: scenario.k1_initial,
            method: ForecastMethod::Simulation,
        }));
    }

    let mut segments = Vec::with_capacity(12);
    let mut events = Vec::with_capacity(8);
    for cycle in 0..GRIDLOCK_CYCLE_GUARD {
        segments.clear();
        events.clear();
        k1 = sim.one_cycle(k1, cycle, &mut segments, &mut events)?;
        for seg in &segments {
            for target in [threshold, two_k - threshold] {
                if let Some(t) = segment_crossing(seg, target) {
                    return Ok(GridlockOutcome::Reached(GridlockForecast {
                        t_g: t,
                        sigma,
                        k1_initial: scenario.k1_initial,
                        method: ForecastMethod::Simulation,
                    }));
                }
            }
        }
    }
    Ok(GridlockOutcome::NotReached {
        cycles: GRIDLOCK_CYCLE_GUARD,
    })
}

fn segment_crossing<T: Scalar>(seg: &crate::sim::Segment<T>, target: T) -> Option<T> {
    let (lo, hi) = if seg.k1_start <= seg.k1_end {
        (seg.k1_start, seg.k1_end)
    } else {
        (seg.k1_end, seg.k1_start)
    };
    if target < lo || target > hi {
        return None;
    }
    if seg.k1_start == target {
        return Some(seg.t0);
    }
    // Invert the closed-form orbit for the crossing instant.
    let c = &seg.coeffs;
    let tau = if c.a == T::zero() {
        if c.b == T::zero() {
            return None;
        }
        (target - seg.k1_start) / c.b
    } else {
        let e = -c.b / c.a;
        let ratio = (target - e) / (seg.k1_start - e);
        if !(ratio > T::zero()) {
            return None;
        }
        ratio.ln() / c.a
    };
    let t = seg.t0 + tau;
    (t >= seg.t0 && t <= seg.t1).then_some(t)
}
