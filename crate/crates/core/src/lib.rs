//! Traffic statics and dynamics of a signalized double-ring road network.
//!
//! Two ring roads exchange traffic through one signalized junction. Under a
//! link-queue representation with a triangular fundamental diagram the
//! network is a switched affine system; this crate provides:
//!
//! - the core model (fundamental diagram, signal indicators, FIFO diverge
//!   fluxes, conservation right-hand side),
//! - the region atlas of the `(k1, k)` phase space and admissible region
//!   pairs,
//! - an exact event-driven simulator of the switched dynamics plus a
//!   forward-Euler reference integrator,
//! - closed-form and numerical Poincaré return maps, fixed points, and
//!   their stability,
//! - macroscopic fundamental diagrams and gridlock-time predictions,
//! - an independent cell-transmission-model simulator of the same network
//!   for cross-validation.
//!
//! Everything is generic over the scalar type via [`scalar::Scalar`];
//! concrete `f64` aliases live at the crate root.

// Validation uses negated comparisons (`!(x > 0)`) on purpose: they reject
// NaN inputs, which `x <= 0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atlas;
pub mod ctm;
pub mod error;
pub mod fd;
pub mod mfd;
pub mod model;
pub mod poincare;
pub mod scalar;
pub mod signal;
pub mod sim;

pub use atlas::{
    admissible_pairs, classify, coefficients, lambda, AdmissiblePairs, AffineCoefficients, Gammas,
    GreenPhase, RegionId, RegionInterval, RegionPair,
};
pub use ctm::{
    ctm_average_flow, ctm_build, ctm_flow_at_stationarity, ctm_gridlock_time, ctm_run, ctm_step,
    CtmState, CtmTrajectory,
};
pub use error::{Error, Result};
pub use fd::TriangularFd;
pub use mfd::{
    average_flow_approx, gridlock_time_formula, gridlock_time_simulated, mfd_closed_form,
    mfd_numeric, mfd_numeric_at, ForecastMethod, GridlockForecast, GridlockOutcome, MfdPoint,
    MfdSource, MfdStability,
};
pub use model::{diverge_fluxes, rhs, FluxBundle, NetworkState, Scenario, TurningPolicy};
pub use poincare::{
    closed_form_map, default_scan_params, fixed_point_closed, phi, scan_stationary_states,
    secant_solve, short_cycle_check, FixedPoint, FixedPointSource, PoincareAffine, Stability,
    StationaryScan, StationaryState,
};
pub use scalar::Scalar;
pub use signal::{PhaseInterval, SignalTiming};
pub use sim::{
    average_flow, euler_reference, poincare_numeric, simulate, step_exact, LqmSimulator, Trajectory,
};

/// `f64` aliases for the main model types.
pub type TriangularFd64 = TriangularFd<f64>;
pub type SignalTiming64 = SignalTiming<f64>;
pub type TurningPolicy64 = TurningPolicy<f64>;
pub type Scenario64 = Scenario<f64>;
pub type Gammas64 = Gammas<f64>;

/// `f32` aliases, for callers trading precision for footprint.
pub type TriangularFd32 = TriangularFd<f32>;
pub type Scenario32 = Scenario<f32>;
