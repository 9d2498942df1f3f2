//! Subcommand implementations. Every command writes CSV files into the
//! output directory and returns the list of paths written.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use ringlab::atlas::{boundary_polylines, GreenPhase};
use ringlab::ctm::{ctm_build, ctm_gridlock_time, ctm_run, ctm_step};
use ringlab::poincare::FixedPointSource;
use ringlab::sim::{simulate, LqmSimulator};
use ringlab::{
    admissible_pairs, average_flow, fixed_point_closed, gridlock_time_formula,
    gridlock_time_simulated, mfd_numeric_at, scan_stationary_states, GridlockOutcome, Scenario64,
    SignalTiming, StationaryState, TriangularFd, TurningPolicy,
};

use crate::config::{Engine, RunConfig};
use crate::output::{float, int, text, CsvField, CsvFile};

pub type CmdResult = Result<Vec<PathBuf>, String>;

fn numeric<E: std::fmt::Display>(e: E) -> String {
    format!("numeric failure: {e}")
}

/// Runs closures over a density list, in order, optionally on a thread pool.
fn sweep<T: Send, F: Fn(f64) -> Result<T, String> + Sync>(
    densities: &[f64],
    parallel: usize,
    f: F,
) -> Result<Vec<T>, String> {
    if parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| densities.par_iter().map(|&k| f(k)).collect())
    } else {
        densities.iter().map(|&k| f(k)).collect()
    }
}

const TRAJECTORY_HEADER: &str = "t_s,k1_vpm,k2_vpm,region,g1_vps,g2_vps,q_rolling_vps";

pub fn simulate_cmd(cfg: &RunConfig, scenario: &Scenario64, out: &Path) -> CmdResult {
    match cfg.engine {
        Engine::Lqm => {
            let traj = simulate(scenario, cfg.n_cycles).map_err(numeric)?;
            let cycle = scenario.timing.cycle();
            let mut csv = CsvFile::new(out, "trajectory.csv", TRAJECTORY_HEADER);
            for s in &traj.samples {
                let q = if s.t >= cycle {
                    CsvField::Float(average_flow(&traj, s.t).map_err(numeric)?)
                } else {
                    CsvField::Empty
                };
                csv.row(&[
                    float(s.t),
                    float(s.k1),
                    float(scenario.k2(s.k1)),
                    int(s.region.index() as i64),
                    float(s.out_1),
                    float(s.out_2),
                    q,
                ]);
            }
            Ok(vec![csv.write()?])
        }
        Engine::Ctm => {
            let horizon = cfg.n_cycles as f64 * scenario.timing.cycle();
            let (traj, _) = ctm_run(scenario, cfg.ctm_dt_s, horizon).map_err(numeric)?;
            let cycle = scenario.timing.cycle();
            let window = (cycle / traj.dt).round() as usize;
            let mut csv = CsvFile::new(out, "trajectory.csv", TRAJECTORY_HEADER);
            // Trailing-cycle throughput via a running sum over the window.
            let mut acc = 0.0f64;
            for (i, &t) in traj.times.iter().enumerate() {
                let q = if i >= window {
                    CsvField::Float(acc / (2.0 * cycle))
                } else {
                    CsvField::Empty
                };
                let (g1, g2) = if i < traj.out_1.len() {
                    (float(traj.out_1[i]), float(traj.out_2[i]))
                } else {
                    (CsvField::Empty, CsvField::Empty)
                };
                csv.row(&[
                    float(t),
                    float(traj.k1_avg[i]),
                    float(traj.k2_avg[i]),
                    CsvField::Empty,
                    g1,
                    g2,
                    q,
                ]);
                if i < traj.out_1.len() {
                    acc += (traj.out_1[i] + traj.out_2[i]) * traj.dt;
                    if i + 1 > window {
                        let j = i - window;
                        acc -= (traj.out_1[j] + traj.out_2[j]) * traj.dt;
                    }
                }
            }
            Ok(vec![csv.write()?])
        }
    }
}

const FIXED_POINTS_HEADER: &str =
    "k_vpm,kind,k1_lo_vpm,k1_hi_vpm,multiplier,stability,gridlock,pair,source";

pub fn fixed_points_cmd(cfg: &RunConfig, scenario: &Scenario64, out: &Path) -> CmdResult {
    let densities = cfg.densities();
    let (dk, tol, n_max) = cfg.scan_params();

    let per_k = sweep(&densities, cfg.parallel, |k| {
        let mut sc = *scenario;
        sc.avg_density = k;
        let (lo, hi) = sc.k1_bounds();
        sc.k1_initial = sc.k1_initial.max(lo).min(hi);
        let scan = scan_stationary_states(&sc, dk, tol, n_max).map_err(numeric)?;
        if scan.skipped_seeds > 0 {
            info!("k={k}: {} non-convergent seeds skipped", scan.skipped_seeds);
        }
        // Closed-form fixed points where the homogeneous settings allow.
        let mut closed = Vec::new();
        if sc.turning.is_uniform() && sc.timing.is_symmetric() {
            let sets = admissible_pairs(sc.turning.retain_1()).map_err(numeric)?;
            let mut pairs = sets.stationary.clone();
            for g in sets.gridlock {
                if !pairs.contains(&g) {
                    pairs.push(g);
                }
            }
            pairs.sort();
            for pair in pairs {
                match fixed_point_closed(pair, &sc) {
                    Ok(fp) => closed.push((pair, fp)),
                    Err(ringlab::Error::FixedPointOutOfRegion { .. }) => {}
                    Err(e) => warn!("closed form {pair} at k={k}: {e}"),
                }
            }
        }
        Ok((k, scan, closed))
    })?;

    let mut csv = CsvFile::new(out, "fixed_points.csv", FIXED_POINTS_HEADER);
    for (k, scan, closed) in &per_k {
        for (pair, fp) in closed {
            let label = format!("{pair}");
            csv.row(&[
                float(*k),
                text("point"),
                float(fp.k1_star),
                float(fp.k1_star),
                float(fp.multiplier),
                text(fp.stability.label()),
                int(fp.gridlock as i64),
                text(&label),
                text("closed-form"),
            ]);
        }
        for state in &scan.states {
            match state {
                StationaryState::Point(fp) => {
                    let pair_label = match fp.source {
                        FixedPointSource::ClosedForm(p) => format!("{p}"),
                        FixedPointSource::Numeric => "numeric".to_string(),
                    };
                    csv.row(&[
                        float(*k),
                        text("point"),
                        float(fp.k1_star),
                        float(fp.k1_star),
                        float(fp.multiplier),
                        text(fp.stability.label()),
                        int(fp.gridlock as i64),
                        text(&pair_label),
                        text("scan"),
                    ]);
                }
                StationaryState::Continuum { lo, hi } => {
                    csv.row(&[
                        float(*k),
                        text("continuum"),
                        float(*lo),
                        float(*hi),
                        float(1.0),
                        text("lyapunov-stable"),
                        int(0),
                        text("numeric"),
                        text("scan"),
                    ]);
                }
            }
        }
    }
    let mut written = vec![csv.write()?];

    // Root-function dumps at the requested ring-1 densities.
    let mut phi_csv = CsvFile::new(out, "phi.csv", "k_vpm,k1_vpm,phi_vpm");
    for &k in &densities {
        let mut sc = *scenario;
        sc.avg_density = k;
        let (lo, hi) = sc.k1_bounds();
        sc.k1_initial = sc.k1_initial.max(lo).min(hi);
        let sim = LqmSimulator::new(&sc).map_err(numeric)?;
        let probes: Vec<f64> = match &cfg.k1_list {
            Some(list) => list.clone(),
            None => (0..=cfg.phi_samples)
                .map(|i| lo + (hi - lo) * i as f64 / cfg.phi_samples as f64)
                .collect(),
        };
        for k1 in probes {
            if k1 < lo || k1 > hi {
                continue;
            }
            let p = sim.poincare(k1).map_err(numeric)?;
            phi_csv.row(&[float(k), float(k1), float(k1 - p)]);
        }
    }
    written.push(phi_csv.write()?);
    Ok(written)
}

const MFD_HEADER: &str = "k_vpm,q_vps,stability,source,k1_star_lo_vpm,k1_star_hi_vpm,converged";

pub fn mfd_cmd(cfg: &RunConfig, scenario: &Scenario64, out: &Path) -> CmdResult {
    let densities = cfg.densities();
    let mut csv = CsvFile::new(out, "mfd.csv", MFD_HEADER);
    match cfg.engine {
        Engine::Lqm => {
            let (dk, tol, n_max) = cfg.scan_params();
            let rows = sweep(&densities, cfg.parallel, |k| {
                mfd_numeric_at(scenario, k, dk, tol, n_max).map_err(numeric)
            })?;
            for points in rows {
                for p in points {
                    if !p.converged {
                        warn!("mfd point at k={} did not reach stationarity", p.k);
                    }
                    csv.row(&[
                        float(p.k),
                        float(p.q),
                        text(p.stability.label()),
                        text(p.source.label()),
                        float(p.k1_lo),
                        float(p.k1_hi),
                        int(p.converged as i64),
                    ]);
                }
            }
        }
        Engine::Ctm => {
            let rows = sweep(&densities, cfg.parallel, |k| {
                let mut sc = *scenario;
                sc.avg_density = k;
                let (lo, hi) = sc.k1_bounds();
                sc.k1_initial = k.max(lo).min(hi);
                let (q, converged) =
                    ringlab::ctm_flow_at_stationarity(&sc, cfg.ctm_dt_s).map_err(numeric)?;
                Ok((k, q, converged))
            })?;
            for (k, q, converged) in rows {
                csv.row(&[
                    float(k),
                    float(q),
                    text("simulated"),
                    text("ctm"),
                    float(k),
                    float(k),
                    int(converged as i64),
                ]);
            }
        }
    }
    Ok(vec![csv.write()?])
}

const GRIDLOCK_TRAJ_HEADER: &str = "t_s,k1_vpm,k2_vpm";
const GRIDLOCK_FORECAST_HEADER: &str = "method,t_g_s,sigma,k1_0_vpm";

pub fn gridlock_cmd(cfg: &RunConfig, scenario: &Scenario64, out: &Path) -> CmdResult {
    let mut traj_csv = CsvFile::new(out, "gridlock_trajectory.csv", GRIDLOCK_TRAJ_HEADER);
    let mut forecast_csv = CsvFile::new(out, "gridlock_forecast.csv", GRIDLOCK_FORECAST_HEADER);
    let sigma = cfg.sigma;
    let outcome = match cfg.engine {
        Engine::Lqm => gridlock_time_simulated(scenario, sigma).map_err(numeric)?,
        Engine::Ctm => ctm_gridlock_time(scenario, cfg.ctm_dt_s, sigma).map_err(numeric)?,
    };
    let t_end = match outcome {
        GridlockOutcome::Reached(f) => {
            forecast_csv.row(&[
                text(f.method.label()),
                float(f.t_g),
                float(f.sigma),
                float(f.k1_initial),
            ]);
            f.t_g + 2.0 * scenario.timing.cycle()
        }
        GridlockOutcome::NotReached { cycles } => {
            info!("no gridlock within {cycles} cycles");
            forecast_csv.row(&[
                text("no-gridlock"),
                CsvField::Empty,
                float(sigma),
                float(scenario.k1_initial),
            ]);
            cfg.n_cycles as f64 * scenario.timing.cycle()
        }
    };
    // The log-formula forecast where its derivation applies.
    if scenario.turning.is_uniform() && scenario.turning.retain_1() > 0.5 {
        match gridlock_time_formula(
            scenario.k1_initial,
            scenario.turning.retain_1(),
            scenario.timing.green_ratio_1(),
            &scenario.fd,
            scenario.ring_length,
            sigma,
        ) {
            Ok(f) => forecast_csv.row(&[
                text(f.method.label()),
                float(f.t_g),
                float(f.sigma),
                float(f.k1_initial),
            ]),
            Err(e) => info!("formula forecast unavailable: {e}"),
        }
    }

    // Cycle-start trajectory up to a little past the crossing.
    let cycles = ((t_end / scenario.timing.cycle()).ceil() as usize).clamp(1, 20_000);
    match cfg.engine {
        Engine::Lqm => {
            let sim = LqmSimulator::new(scenario).map_err(numeric)?;
            let mut k1 = scenario.k1_initial;
            let mut segments = Vec::new();
            let mut events = Vec::new();
            traj_csv.row(&[float(0.0), float(k1), float(scenario.k2(k1))]);
            for cycle in 0..cycles {
                segments.clear();
                events.clear();
                k1 = sim
                    .one_cycle(k1, cycle, &mut segments, &mut events)
                    .map_err(numeric)?;
                let t = (cycle + 1) as f64 * scenario.timing.cycle();
                traj_csv.row(&[float(t), float(k1), float(scenario.k2(k1))]);
            }
        }
        Engine::Ctm => {
            let mut state = ctm_build(scenario, cfg.ctm_dt_s).map_err(numeric)?;
            let per_cycle = (scenario.timing.cycle() / state.dt).round() as usize;
            let (a1, a2) = state.ring_averages();
            traj_csv.row(&[float(0.0), float(a1), float(a2)]);
            for _ in 0..cycles {
                for _ in 0..per_cycle {
                    let deltas = scenario.timing.indicators(state.time());
                    ctm_step(&mut state, deltas, scenario).map_err(numeric)?;
                }
                let (a1, a2) = state.ring_averages();
                traj_csv.row(&[float(state.time()), float(a1), float(a2)]);
            }
        }
    }
    Ok(vec![traj_csv.write()?, forecast_csv.write()?])
}

const ATLAS_HEADER: &str = "deltas,boundary_id,k1_vpm,k_vpm";

pub fn atlas_cmd(cfg: &RunConfig, scenario: &Scenario64, out: &Path) -> CmdResult {
    let mut csv = CsvFile::new(out, "atlas.csv", ATLAS_HEADER);
    for (phase, label) in [(GreenPhase::One, "green1"), (GreenPhase::Two, "green2")] {
        let polys = boundary_polylines(phase, &scenario.turning, &scenario.fd, cfg.atlas_samples)
            .map_err(numeric)?;
        for poly in polys {
            for (k1, k) in poly.points {
                csv.row(&[text(label), text(&poly.label), float(k1), float(k)]);
            }
        }
    }
    Ok(vec![csv.write()?])
}

/// Per-cell density snapshots for the CTM, one row per (time, ring, cell).
pub fn ctm_cells_cmd(cfg: &RunConfig, scenario: &Scenario64, out: &Path) -> CmdResult {
    let mut state = ctm_build(scenario, cfg.ctm_dt_s).map_err(numeric)?;
    let per_cycle = (scenario.timing.cycle() / state.dt).round() as usize;
    let mut csv = CsvFile::new(out, "cells.csv", "t_s,ring,cell,density_vpm");
    let snapshot = |state: &ringlab::CtmState<f64>, csv: &mut CsvFile| {
        for (ring_id, cells) in [(1i64, &state.ring1), (2i64, &state.ring2)] {
            for (i, &density) in cells.iter().enumerate() {
                csv.row(&[
                    float(state.time()),
                    int(ring_id),
                    int(i as i64),
                    float(density),
                ]);
            }
        }
    };
    snapshot(&state, &mut csv);
    for _ in 0..cfg.n_cycles {
        for _ in 0..per_cycle {
            let deltas = scenario.timing.indicators(state.time());
            ctm_step(&mut state, deltas, scenario).map_err(numeric)?;
        }
        snapshot(&state, &mut csv);
    }
    Ok(vec![csv.write()?])
}

/// Canned figure-reproduction recipes.
pub fn reproduce_cmd(target: &str, base: &RunConfig, out: &Path) -> CmdResult {
    match target {
        "fig4" => reproduce_fig4(base, out),
        "fig6" => reproduce_fig6(base, out),
        "fig7a" => reproduce_fig7(base, out, "fig7a", 0.85, true),
        "fig7b" => reproduce_fig7(base, out, "fig7b", 0.3, false),
        "fig7c" => reproduce_fig7(base, out, "fig7c", 0.5, false),
        other => Err(format!(
            "unknown reproduce target {other}; expected fig4, fig6, fig7a, fig7b, fig7c"
        )),
    }
}

fn fig_scenario(xi: f64, cycle: f64, lost: f64, k: f64, k1_0: f64) -> Result<Scenario64, String> {
    let fd = TriangularFd::new(30.0 / 3600.0, 7.5 / 3600.0, 150.0).map_err(|e| e.to_string())?;
    Scenario64::new(
        fd,
        0.25,
        SignalTiming::symmetric(cycle, lost).map_err(|e| e.to_string())?,
        TurningPolicy::uniform(xi).map_err(|e| e.to_string())?,
        k,
        k1_0,
    )
    .map_err(|e| e.to_string())
}

/// Gridlock patterns: retention sweep at one start, start sweep at one
/// retention; cycle 30 s, lost time 2 s, sigma 0.01.
fn reproduce_fig4(base: &RunConfig, out: &Path) -> CmdResult {
    let k = 80.0;
    let mut written = Vec::new();
    let mut forecast = CsvFile::new(out, "fig4_forecast.csv", "panel,xi,k1_0_vpm,method,t_g_s");
    let emit = |panel: &str,
                xi: f64,
                k1_0: f64,
                written: &mut Vec<PathBuf>,
                forecast: &mut CsvFile|
     -> Result<(), String> {
        let sc = fig_scenario(xi, 30.0, 2.0, k, k1_0)?;
        let mut cfg = base.clone();
        cfg.engine = Engine::Lqm;
        let t_sim = match gridlock_time_simulated(&sc, 0.01).map_err(numeric)? {
            GridlockOutcome::Reached(f) => f.t_g,
            GridlockOutcome::NotReached { .. } => return Err("expected gridlock".into()),
        };
        forecast.row(&[
            text(panel),
            float(xi),
            float(k1_0),
            text("simulation"),
            float(t_sim),
        ]);
        if let Ok(f) =
            gridlock_time_formula(k1_0, xi, sc.timing.green_ratio_1(), &sc.fd, 0.25, 0.01)
        {
            forecast.row(&[
                text(panel),
                float(xi),
                float(k1_0),
                text("formula"),
                float(f.t_g),
            ]);
        }
        let cycles = ((t_sim / 30.0).ceil() as usize + 2).min(20_000);
        let sim = LqmSimulator::new(&sc).map_err(numeric)?;
        let mut csv = CsvFile::new(
            out,
            &format!("{panel}_xi{xi}_k1_{k1_0}.csv"),
            GRIDLOCK_TRAJ_HEADER,
        );
        let mut k1 = k1_0;
        csv.row(&[float(0.0), float(k1), float(sc.k2(k1))]);
        let mut segments = Vec::new();
        let mut events = Vec::new();
        for cycle in 0..cycles {
            segments.clear();
            events.clear();
            k1 = sim
                .one_cycle(k1, cycle, &mut segments, &mut events)
                .map_err(numeric)?;
            csv.row(&[
                float((cycle + 1) as f64 * 30.0),
                float(k1),
                float(sc.k2(k1)),
            ]);
        }
        written.push(csv.write()?);
        Ok(())
    };
    for xi in [0.6, 0.7, 0.8, 0.9] {
        emit("fig4a", xi, 135.0, &mut written, &mut forecast)?;
    }
    for k1_0 in [105.0, 120.0, 135.0] {
        emit("fig4b", 0.7, k1_0, &mut written, &mut forecast)?;
    }
    written.push(forecast.write()?);
    Ok(written)
}

/// Root-function curves at xi = 0.55, T = 60 s, lost time 4 s, for network
/// densities spanning the one-root, multi-root, and flat-segment cases.
fn reproduce_fig6(base: &RunConfig, out: &Path) -> CmdResult {
    let mut csv = CsvFile::new(out, "fig6_phi.csv", "k_vpm,k1_vpm,phi_vpm");
    for k in [20.0, 65.0, 78.0] {
        let sc = fig_scenario(0.55, 60.0, 4.0, k, k)?;
        let sim = LqmSimulator::new(&sc).map_err(numeric)?;
        let (lo, hi) = sc.k1_bounds();
        for i in 0..=base.phi_samples {
            let k1 = lo + (hi - lo) * i as f64 / base.phi_samples as f64;
            let p = sim.poincare(k1).map_err(numeric)?;
            csv.row(&[float(k), float(k1), float(k1 - p)]);
        }
    }
    Ok(vec![csv.write()?])
}

/// Long-cycle MFDs (T = 100 s, no lost time) for one retention ratio; the
/// high-retention panel also runs the cell-transmission engine.
fn reproduce_fig7(base: &RunConfig, out: &Path, name: &str, xi: f64, with_ctm: bool) -> CmdResult {
    let template = fig_scenario(xi, 100.0, 0.0, 20.0, 20.0)?;
    let (dk, tol, n_max) = base.scan_params();
    let densities: Vec<f64> = (0..=30).map(|i| 150.0 * i as f64 / 30.0).collect();
    let rows = sweep(&densities, base.parallel, |k| {
        mfd_numeric_at(&template, k, dk, tol, n_max).map_err(numeric)
    })?;
    let mut csv = CsvFile::new(out, &format!("{name}_lqm.csv"), MFD_HEADER);
    for points in rows {
        for p in points {
            csv.row(&[
                float(p.k),
                float(p.q),
                text(p.stability.label()),
                text(p.source.label()),
                float(p.k1_lo),
                float(p.k1_hi),
                int(p.converged as i64),
            ]);
        }
    }
    let mut written = vec![csv.write()?];

    if with_ctm {
        let ctm_densities: Vec<f64> = (0..=15).map(|i| 150.0 * i as f64 / 15.0).collect();
        let rows = sweep(&ctm_densities, base.parallel, |k| {
            let mut sc = template;
            sc.avg_density = k;
            let (lo, hi) = sc.k1_bounds();
            sc.k1_initial = k.max(lo).min(hi);
            let (q, converged) =
                ringlab::ctm_flow_at_stationarity(&sc, base.ctm_dt_s).map_err(numeric)?;
            Ok((k, q, converged))
        })?;
        let mut csv = CsvFile::new(out, &format!("{name}_ctm.csv"), MFD_HEADER);
        for (k, q, converged) in rows {
            csv.row(&[
                float(k),
                float(q),
                text("simulated"),
                text("ctm"),
                float(k),
                float(k),
                int(converged as i64),
            ]);
        }
        written.push(csv.write()?);
    }
    Ok(written)
}
