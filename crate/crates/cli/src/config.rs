//! Run configuration: one scenario per JSON file plus command knobs.
//!
//! Unknown keys are rejected. Speeds are given in mi/h and converted once
//! when the scenario is built; densities are veh/mi, times are seconds, so
//! internal flows come out in veh/s.

use serde::Deserialize;

use ringlab::{Scenario64, SignalTiming, TriangularFd, TurningPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Lqm,
    Ctm,
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Engine::Lqm => write!(f, "lqm"),
            Engine::Ctm => write!(f, "ctm"),
        }
    }
}

/// Density grid specification for sweeps.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // Fundamental diagram (speeds in mi/h, densities in veh/mi).
    #[serde(default = "defaults::v_f_mph")]
    pub v_f_mph: f64,
    #[serde(default = "defaults::w_mph")]
    pub w_mph: f64,
    #[serde(default = "defaults::k_j_vpm")]
    pub k_j_vpm: f64,
    #[serde(default = "defaults::ring_length_mi")]
    pub ring_length_mi: f64,

    // Signal timing (seconds).
    #[serde(default = "defaults::cycle_s")]
    pub cycle_s: f64,
    #[serde(default = "defaults::lost_time_s")]
    pub lost_time_s: f64,
    pub green_ratio_1: Option<f64>,
    pub green_ratio_2: Option<f64>,

    // Turning policy.
    #[serde(default = "defaults::xi")]
    pub xi_1: f64,
    pub xi_2: Option<f64>,

    // Densities (veh/mi).
    #[serde(default = "defaults::k_vpm")]
    pub k_vpm: f64,
    pub k1_0_vpm: Option<f64>,

    // Command knobs.
    #[serde(default = "defaults::engine")]
    pub engine: Engine,
    #[serde(default = "defaults::n_cycles")]
    pub n_cycles: usize,
    #[serde(default = "defaults::ctm_dt_s")]
    pub ctm_dt_s: f64,
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    pub dk_vpm: Option<f64>,
    pub tol_vpm: Option<f64>,
    #[serde(default = "defaults::n_max")]
    pub n_max: usize,
    /// Densities for `mfd` and `fixed-points`; overrides `k_grid`.
    pub k_list: Option<Vec<f64>>,
    pub k_grid: Option<GridSpec>,
    /// Ring-1 densities at which `fixed-points` dumps the root function.
    pub k1_list: Option<Vec<f64>>,
    #[serde(default = "defaults::phi_samples")]
    pub phi_samples: usize,
    #[serde(default = "defaults::atlas_samples")]
    pub atlas_samples: usize,
    #[serde(default = "defaults::parallel")]
    pub parallel: usize,
}

mod defaults {
    use super::Engine;

    pub fn v_f_mph() -> f64 {
        30.0
    }
    pub fn w_mph() -> f64 {
        7.5
    }
    pub fn k_j_vpm() -> f64 {
        150.0
    }
    pub fn ring_length_mi() -> f64 {
        0.25
    }
    pub fn cycle_s() -> f64 {
        30.0
    }
    pub fn lost_time_s() -> f64 {
        2.0
    }
    pub fn xi() -> f64 {
        0.7
    }
    pub fn k_vpm() -> f64 {
        80.0
    }
    pub fn engine() -> Engine {
        Engine::Lqm
    }
    pub fn n_cycles() -> usize {
        20
    }
    pub fn ctm_dt_s() -> f64 {
        0.25
    }
    pub fn sigma() -> f64 {
        0.01
    }
    pub fn n_max() -> usize {
        100
    }
    pub fn phi_samples() -> usize {
        400
    }
    pub fn atlas_samples() -> usize {
        200
    }
    pub fn parallel() -> usize {
        1
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    /// Builds the validated scenario, converting mi/h speeds to mi/s once.
    pub fn scenario(&self) -> Result<Scenario64, String> {
        let fd = TriangularFd::new(self.v_f_mph / 3600.0, self.w_mph / 3600.0, self.k_j_vpm)
            .map_err(|e| e.to_string())?;
        let timing = match (self.green_ratio_1, self.green_ratio_2) {
            (None, None) => SignalTiming::symmetric(self.cycle_s, self.lost_time_s),
            (Some(p1), None) => SignalTiming::new(self.cycle_s, self.lost_time_s, p1),
            (None, Some(p2)) => {
                let p1 = (self.cycle_s - 2.0 * self.lost_time_s) / self.cycle_s - p2;
                SignalTiming::new(self.cycle_s, self.lost_time_s, p1)
            }
            (Some(p1), Some(p2)) => {
                let timing = SignalTiming::new(self.cycle_s, self.lost_time_s, p1)
                    .map_err(|e| e.to_string())?;
                let implied = timing.green_ratio_2();
                if (implied - p2).abs() > 1e-9 {
                    return Err(format!(
                        "green ratios violate (pi1+pi2)T = T - 2*lost_time: pi2 should be \
                         {implied}, got {p2}"
                    ));
                }
                Ok(timing)
            }
        }
        .map_err(|e| e.to_string())?;
        let turning = TurningPolicy::new(self.xi_1, self.xi_2.unwrap_or(self.xi_1))
            .map_err(|e| e.to_string())?;
        let k1_0 = self.k1_0_vpm.unwrap_or(self.k_vpm);
        Scenario64::new(fd, self.ring_length_mi, timing, turning, self.k_vpm, k1_0)
            .map_err(|e| e.to_string())
    }

    pub fn scan_params(&self) -> (f64, f64, usize) {
        let (dk, tol, _) = ringlab::default_scan_params(self.k_j_vpm);
        (
            self.dk_vpm.unwrap_or(dk),
            self.tol_vpm.unwrap_or(tol),
            self.n_max,
        )
    }

    /// Densities for sweeps: explicit list, grid spec, or the scenario's own
    /// density.
    pub fn densities(&self) -> Vec<f64> {
        if let Some(list) = &self.k_list {
            return list.clone();
        }
        if let Some(grid) = &self.k_grid {
            let n = grid.count.max(2);
            return (0..n)
                .map(|i| grid.start + (grid.stop - grid.start) * i as f64 / (n - 1) as f64)
                .collect();
        }
        vec![self.k_vpm]
    }
}
