//! Error type shared by all modules.

use thiserror::Error;

/// Errors surfaced by model construction and the numerical machinery.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A fundamental-diagram parameter violates its invariant.
    #[error("invalid fundamental diagram: {0}")]
    InvalidFd(String),

    /// Signal timing parameters are inconsistent.
    #[error("invalid signal timing: {0}")]
    InvalidTiming(String),

    /// A retaining ratio is outside (0, 1).
    #[error("invalid turning policy: {0}")]
    InvalidTurning(String),

    /// Scenario-level invariant violated (densities, ring length).
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// A density argument fell outside its admissible range.
    #[error("density {value} outside [{lo}, {hi}] for {what}")]
    DensityOutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// No region condition matched a feasible point; indicates an internal
    /// inconsistency in the atlas, so the offending point is reported.
    #[error("no region matched point (k1={k1}, k={k}) in phase {phase}")]
    UnclassifiablePoint {
        k1: f64,
        k: f64,
        phase: &'static str,
    },

    /// The requested region pair has no stationary state for this retaining
    /// ratio regime.
    #[error("region pair ({i},{j}) is not admissible for xi={xi}")]
    InadmissiblePair { i: u8, j: u8, xi: f64 },

    /// A closed-form fixed point exists algebraically but falls outside the
    /// band where its region pair is active, so it is not a stationary state.
    #[error("fixed point k1*={k1_star} of pair ({i},{j}) lies outside the pair's region band")]
    FixedPointOutOfRegion { i: u8, j: u8, k1_star: f64 },

    /// The event-driven integrator crossed more region boundaries in one
    /// cycle than the atlas permits; the orbit is reported for diagnosis.
    #[error("region-crossing budget exceeded in cycle {cycle} at k1={k1}")]
    ChatteringBudget { cycle: usize, k1: f64 },

    /// Generic precondition failure on an operation argument.
    #[error("{0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
