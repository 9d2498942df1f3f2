//! Triangular fundamental diagram with demand/supply decomposition.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Triangular flow-density relation `Q(k) = min(v_f k, w (k_j - k))`.
///
/// The critical density `k_c = w k_j / (v_f + w)` and the capacity
/// `C = v_f k_c` are derived, never set directly, so continuity of the two
/// branches at `k_c` holds by construction.
///
/// Units are only required to be self-consistent: speeds in distance/time,
/// densities in vehicles/distance, flows come out in vehicles/time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangularFd<T> {
    free_flow_speed: T,
    shock_speed: T,
    jam_density: T,
    critical_density: T,
    capacity: T,
}

impl<T: Scalar> TriangularFd<T> {
    /// Builds the diagram from free-flow speed, shock-wave speed, and jam
    /// density.
    pub fn new(free_flow_speed: T, shock_speed: T, jam_density: T) -> Result<Self> {
        if !(free_flow_speed > T::zero()) || !free_flow_speed.is_finite() {
            return Err(Error::InvalidFd(format!(
                "free-flow speed must be positive, got {free_flow_speed}"
            )));
        }
        if !(shock_speed > T::zero()) || !shock_speed.is_finite() {
            return Err(Error::InvalidFd(format!(
                "shock-wave speed must be positive, got {shock_speed}"
            )));
        }
        if !(jam_density > T::zero()) || !jam_density.is_finite() {
            return Err(Error::InvalidFd(format!(
                "jam density must be positive, got {jam_density}"
            )));
        }
        let critical_density = shock_speed * jam_density / (free_flow_speed + shock_speed);
        let capacity = free_flow_speed * critical_density;
        if !(critical_density > T::zero()) || !(critical_density < jam_density) {
            return Err(Error::InvalidFd(format!(
                "derived critical density {critical_density} not in (0, {jam_density})"
            )));
        }
        Ok(Self {
            free_flow_speed,
            shock_speed,
            jam_density,
            critical_density,
            capacity,
        })
    }

    pub fn free_flow_speed(&self) -> T {
        self.free_flow_speed
    }

    pub fn shock_speed(&self) -> T {
        self.shock_speed
    }

    pub fn jam_density(&self) -> T {
        self.jam_density
    }

    pub fn critical_density(&self) -> T {
        self.critical_density
    }

    pub fn capacity(&self) -> T {
        self.capacity
    }

    /// Flow at density `k`: the lower envelope of the two branches.
    pub fn flow(&self, k: T) -> Result<T> {
        self.check_density(k, "Q(k)")?;
        let free = self.free_flow_speed * k;
        let congested = self.shock_speed * (self.jam_density - k);
        Ok(free.min(congested))
    }

    /// Local demand: `Q(k)` below critical, capacity above.
    pub fn demand(&self, k: T) -> Result<T> {
        self.check_density(k, "demand")?;
        if k <= self.critical_density {
            Ok(self.free_flow_speed * k)
        } else {
            Ok(self.capacity)
        }
    }

    /// Local supply: capacity below critical, `Q(k)` above.
    pub fn supply(&self, k: T) -> Result<T> {
        self.check_density(k, "supply")?;
        if k <= self.critical_density {
            Ok(self.capacity)
        } else {
            Ok(self.shock_speed * (self.jam_density - k))
        }
    }

    fn check_density(&self, k: T, what: &'static str) -> Result<()> {
        if k >= T::zero() && k <= self.jam_density {
            Ok(())
        } else {
            Err(Error::DensityOutOfRange {
                what,
                value: k.as_f64(),
                lo: 0.0,
                hi: self.jam_density.as_f64(),
            })
        }
    }
}
