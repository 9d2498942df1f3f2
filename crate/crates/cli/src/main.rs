//! Command-line front end: scenario configuration, subcommand dispatch, and
//! deterministic CSV emission.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for numeric
//! failures. Log level via the `RINGLAB_LOG` environment variable.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{Engine, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Lqm,
    Ctm,
}

#[derive(Parser)]
#[command(
    name = "ringlab",
    version,
    about = "Traffic statics and dynamics of a signalized double-ring network",
    long_about = "Analyzes a two-ring road network coupled through one signalized junction: \
                  exact switched-affine simulation, Poincaré fixed points and stability, \
                  macroscopic fundamental diagrams, gridlock times, and an independent \
                  cell-transmission simulator.\n\n\
                  Units: densities veh/mi, times s, flows veh/s; config speeds are mi/h.\n\
                  All outputs are deterministic CSV files with fixed schemas:\n\
                  - trajectory.csv: t_s,k1_vpm,k2_vpm,region,g1_vps,g2_vps,q_rolling_vps\n\
                  - fixed_points.csv: k_vpm,kind,k1_lo_vpm,k1_hi_vpm,multiplier,stability,gridlock,pair,source\n\
                  - phi.csv: k_vpm,k1_vpm,phi_vpm\n\
                  - mfd.csv: k_vpm,q_vps,stability,source,k1_star_lo_vpm,k1_star_hi_vpm,converged\n\
                  - gridlock_trajectory.csv: t_s,k1_vpm,k2_vpm\n\
                  - gridlock_forecast.csv: method,t_g_s,sigma,k1_0_vpm\n\
                  - atlas.csv: deltas,boundary_id,k1_vpm,k_vpm\n\
                  - cells.csv: t_s,ring,cell,density_vpm"
)]
struct Cli {
    /// JSON scenario configuration (defaults applied when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Simulation engine override.
    #[arg(long, global = true, value_enum)]
    engine: Option<EngineArg>,

    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for density sweeps (deterministic merge order).
    #[arg(long, global = true)]
    parallel: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the link-level dynamics (or the CTM) and emit the
    /// trajectory with rolling average flow.
    Simulate,
    /// Stationary-state scan plus closed-form fixed points, with
    /// root-function dumps.
    FixedPoints,
    /// Macroscopic fundamental diagram over a density grid.
    Mfd,
    /// Gridlock probe: simulated crossing time, log-formula forecast, and
    /// the cycle-start trajectory.
    Gridlock,
    /// Region-boundary polylines of the phase diagrams.
    Atlas,
    /// Run a subcommand on the cell-transmission engine.
    Ctm {
        #[command(subcommand)]
        mode: CtmMode,
    },
    /// Canned recipes for the reference figures.
    Reproduce {
        /// One of: fig4, fig6, fig7a, fig7b, fig7c.
        target: String,
    },
}

#[derive(Subcommand)]
enum CtmMode {
    Simulate,
    Mfd,
    Gridlock,
    /// Per-cell density snapshots at cycle boundaries.
    Cells,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("RINGLAB_LOG")).init();
    let cli = Cli::parse();

    let mut cfg = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(2);
            }
        },
        None => RunConfig::default(),
    };
    if let Some(engine) = cli.engine {
        cfg.engine = match engine {
            EngineArg::Lqm => Engine::Lqm,
            EngineArg::Ctm => Engine::Ctm,
        };
    }
    if let Some(parallel) = cli.parallel {
        cfg.parallel = parallel.max(1);
    }

    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!(
            "config error: cannot create output dir {}: {e}",
            cli.out.display()
        );
        return ExitCode::from(2);
    }

    let scenario = match cfg.scenario() {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };

    let result = match &cli.command {
        Command::Simulate => commands::simulate_cmd(&cfg, &scenario, &cli.out),
        Command::FixedPoints => commands::fixed_points_cmd(&cfg, &scenario, &cli.out),
        Command::Mfd => commands::mfd_cmd(&cfg, &scenario, &cli.out),
        Command::Gridlock => commands::gridlock_cmd(&cfg, &scenario, &cli.out),
        Command::Atlas => commands::atlas_cmd(&cfg, &scenario, &cli.out),
        Command::Ctm { mode } => {
            cfg.engine = Engine::Ctm;
            match mode {
                CtmMode::Simulate => commands::simulate_cmd(&cfg, &scenario, &cli.out),
                CtmMode::Mfd => commands::mfd_cmd(&cfg, &scenario, &cli.out),
                CtmMode::Gridlock => commands::gridlock_cmd(&cfg, &scenario, &cli.out),
                CtmMode::Cells => commands::ctm_cells_cmd(&cfg, &scenario, &cli.out),
            }
        }
        Command::Reproduce { target } => commands::reproduce_cmd(target, &cfg, &cli.out),
    };

    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) if e.starts_with("numeric failure") => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
    }
}
