//! Double-ring problem instance: turning policy, scenario, junction fluxes,
//! and the density ODE right-hand side.

use crate::error::{Error, Result};
use crate::fd::TriangularFd;
use crate::scalar::Scalar;
use crate::signal::SignalTiming;

/// Retaining ratios: the fraction of each ring's out-flux that stays on its
/// own ring; the complement turns onto the other ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurningPolicy<T> {
    retain_1: T,
    retain_2: T,
}

impl<T: Scalar> TurningPolicy<T> {
    pub fn new(retain_1: T, retain_2: T) -> Result<Self> {
        for (name, xi) in [("xi1", retain_1), ("xi2", retain_2)] {
            if !(xi > T::zero() && xi < T::one()) {
                return Err(Error::InvalidTurning(format!(
                    "{name} must lie in (0,1), got {xi}"
                )));
            }
        }
        Ok(Self { retain_1, retain_2 })
    }

    /// Same retaining ratio on both rings.
    pub fn uniform(retain: T) -> Result<Self> {
        Self::new(retain, retain)
    }

    pub fn retain_1(&self) -> T {
        self.retain_1
    }

    pub fn retain_2(&self) -> T {
        self.retain_2
    }

    pub fn is_uniform(&self) -> bool {
        self.retain_1 == self.retain_2
    }
}

/// Junction fluxes for one instant: out-fluxes `g1`, `g2` leaving the rings
/// and in-fluxes `f1`, `f2` entering them.
///
/// `f1` and `f2` are assembled from complements (`g - retained`) so that the
/// conservation identity `g1 + g2 = f1 + f2` holds to rounding of a single
/// addition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxBundle<T> {
    pub out_1: T,
    pub out_2: T,
    pub in_1: T,
    pub in_2: T,
}

/// Instantaneous state of the network: time, ring-1 density, and the active
/// indicator pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkState<T> {
    pub time: T,
    pub k1: T,
    pub deltas: (bool, bool),
}

/// Full problem instance. Densities are in vehicles/distance; speeds and the
/// ring length share one distance unit, and times share one time unit with
/// the signal timing. Any unit conversion happens before construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario<T> {
    pub fd: TriangularFd<T>,
    pub ring_length: T,
    pub timing: SignalTiming<T>,
    pub turning: TurningPolicy<T>,
    /// Average network density `k`; ring densities satisfy `k1 + k2 = 2k`.
    pub avg_density: T,
    /// Ring-1 density at the start of the first cycle.
    pub k1_initial: T,
}

impl<T: Scalar> Scenario<T> {
    pub fn new(
        fd: TriangularFd<T>,
        ring_length: T,
        timing: SignalTiming<T>,
        turning: TurningPolicy<T>,
        avg_density: T,
        k1_initial: T,
    ) -> Result<Self> {
        if !(ring_length > T::zero()) || !ring_length.is_finite() {
            return Err(Error::InvalidScenario(format!(
                "ring length must be positive, got {ring_length}"
            )));
        }
        if avg_density < T::zero() || avg_density > fd.jam_density() {
            return Err(Error::InvalidScenario(format!(
                "average density {avg_density} outside [0, {}]",
                fd.jam_density()
            )));
        }
        let scenario = Self {
            fd,
            ring_length,
            timing,
            turning,
            avg_density,
            k1_initial,
        };
        let (lo, hi) = scenario.k1_bounds();
        if k1_initial < lo || k1_initial > hi {
            return Err(Error::InvalidScenario(format!(
                "initial ring-1 density {k1_initial} outside feasible band [{lo}, {hi}]"
            )));
        }
        Ok(scenario)
    }

    /// Feasible band for `k1`: both ring densities must lie in `[0, k_j]`,
    /// so `max(2k - k_j, 0) <= k1 <= min(2k, k_j)`.
    pub fn k1_bounds(&self) -> (T, T) {
        let two_k = T::two() * self.avg_density;
        let kj = self.fd.jam_density();
        ((two_k - kj).max(T::zero()), two_k.min(kj))
    }

    /// Ring-2 density implied by conservation.
    pub fn k2(&self, k1: T) -> T {
        T::two() * self.avg_density - k1
    }

    pub fn contains_k1(&self, k1: T) -> bool {
        let (lo, hi) = self.k1_bounds();
        k1 >= lo && k1 <= hi
    }
}

/// FIFO diverge fluxes of the signalized junction.
///
/// During ring-1 green, `g1 = min(D1, S1/ξ1, S2/(1-ξ1))`; symmetrically for
/// ring 2. Retained and turning shares rejoin as the in-fluxes.
pub fn diverge_fluxes<T: Scalar>(
    k1: T,
    avg_density: T,
    deltas: (bool, bool),
    turning: &TurningPolicy<T>,
    fd: &TriangularFd<T>,
) -> Result<FluxBundle<T>> {
    let k2 = T::two() * avg_density - k1;
    let d1 = fd.demand(k1)?;
    let d2 = fd.demand(k2)?;
    let s1 = fd.supply(k1)?;
    let s2 = fd.supply(k2)?;
    let xi1 = turning.retain_1();
    let xi2 = turning.retain_2();

    let out_1 = if deltas.0 {
        d1.min(s1 / xi1).min(s2 / (T::one() - xi1))
    } else {
        T::zero()
    };
    let out_2 = if deltas.1 {
        d2.min(s2 / xi2).min(s1 / (T::one() - xi2))
    } else {
        T::zero()
    };

    // Split each out-flux into the retained share and its exact complement,
    // then recombine; this keeps g1 + g2 = f1 + f2 at rounding level.
    let retained_1 = out_1 * xi1;
    let turned_1 = out_1 - retained_1;
    let retained_2 = out_2 * xi2;
    let turned_2 = out_2 - retained_2;
    Ok(FluxBundle {
        out_1,
        out_2,
        in_1: retained_1 + turned_2,
        in_2: turned_1 + retained_2,
    })
}

/// Conservation right-hand side for ring 1:
/// `dk1/dt = (f1 - g1)/L = [-(1-ξ1) g1 + (1-ξ2) g2] / L`.
pub fn rhs<T: Scalar>(
    k1: T,
    avg_density: T,
    deltas: (bool, bool),
    turning: &TurningPolicy<T>,
    fd: &TriangularFd<T>,
    ring_length: T,
) -> Result<T> {
    let flux = diverge_fluxes(k1, avg_density, deltas, turning, fd)?;
    let one = T::one();
    Ok(
        (-(one - turning.retain_1()) * flux.out_1 + (one - turning.retain_2()) * flux.out_2)
            / ring_length,
    )
}
