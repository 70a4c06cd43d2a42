//! Thin command-line wrapper over [`polyembed::cli`].
//!
//! Exit codes: 0 ok, 1 numerical-quality warning escalated by `--strict`,
//! 2 config or IO error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polyembed::cli::{self, EvalMode, RunConfig};

#[derive(Parser)]
#[command(
    name = "polyembed",
    about = "Far-field coefficients for sound-soft convex rational polygons via stabilized embedding formulae"
)]
struct Cli {
    /// Plain `key = value` config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in geometry: triangle|square|pentagon|hexagon.
    #[arg(long)]
    shape: Option<String>,
    /// Side length for the built-in shapes.
    #[arg(long)]
    side: Option<f64>,
    /// Polygon file (header `N p`, then `x y q` per vertex).
    #[arg(long)]
    polygon_file: Option<PathBuf>,
    /// Wavenumber.
    #[arg(long)]
    k: Option<f64>,
    /// Solver degrees of freedom per polygon side.
    #[arg(long)]
    dofs: Option<usize>,
    /// Taylor-collar half width around the zero set of Λ.
    #[arg(long)]
    tol1: Option<f64>,
    /// Proximity to Θ* switching to the two-variable branch.
    #[arg(long)]
    tol2: Option<f64>,
    /// Taylor truncation order.
    #[arg(long = "taylor-order")]
    taylor_order: Option<usize>,
    /// Observation-angle grid size.
    #[arg(long)]
    grid: Option<usize>,
    /// Seed for the canonical-angle selection.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Escalate numerical-quality warnings to exit code 1.
    #[arg(long)]
    strict: bool,
    /// Reuse (and write) solution caches in the output directory.
    #[arg(long)]
    cache: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one plane-wave problem and dump the far field over a θ grid.
    Solve {
        /// Incident angle in radians.
        #[arg(long)]
        alpha: f64,
    },
    /// Relative-error grid of an evaluation mode against direct solves.
    ErrorGrid {
        /// naive | taylor | combined.
        #[arg(long)]
        mode: String,
        /// Grid size per axis (defaults to --grid).
        #[arg(long = "grid-n")]
        grid_n: Option<usize>,
    },
    /// Far fields for regular-wavefunction incidence via the Herglotz
    /// quadrature, with per-ℓ error tables.
    Herglotz {
        /// Comma-separated wavefunction orders, e.g. --ell 0,1,2.
        #[arg(long = "ell", value_delimiter = ',', required = true)]
        ells: Vec<i32>,
    },
    /// Assemble the single-scatterer T-matrix and energy-defect report.
    Tmatrix,
}

fn build_config(cli: &Cli) -> polyembed::Result<RunConfig> {
    let mut kv: BTreeMap<String, String> = match &cli.config {
        Some(path) => cli::parse_config_file(path)?,
        None => BTreeMap::new(),
    };
    if let Some(v) = &cli.shape {
        kv.insert("shape".into(), v.clone());
    }
    if let Some(v) = cli.side {
        kv.insert("side".into(), v.to_string());
    }
    if let Some(v) = &cli.polygon_file {
        kv.insert("polygon-file".into(), v.display().to_string());
    }
    if let Some(v) = cli.k {
        kv.insert("k".into(), v.to_string());
    }
    if let Some(v) = cli.dofs {
        kv.insert("dofs".into(), v.to_string());
    }
    if let Some(v) = cli.tol1 {
        kv.insert("tol1".into(), v.to_string());
    }
    if let Some(v) = cli.tol2 {
        kv.insert("tol2".into(), v.to_string());
    }
    if let Some(v) = cli.taylor_order {
        kv.insert("taylor-order".into(), v.to_string());
    }
    if let Some(v) = cli.grid {
        kv.insert("grid".into(), v.to_string());
    }
    if let Some(v) = cli.seed {
        kv.insert("seed".into(), v.to_string());
    }
    if let Some(v) = &cli.out {
        kv.insert("out".into(), v.display().to_string());
    }
    if cli.strict {
        kv.insert("strict".into(), "true".into());
    }
    if cli.cache {
        kv.insert("cache".into(), "true".into());
    }
    RunConfig::from_kv(&kv)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(&cli) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(2);
        }
    };

    let result = match &cli.command {
        Command::Solve { alpha } => cli::cmd_solve(&config, *alpha),
        Command::ErrorGrid { mode, grid_n } => match mode.parse::<EvalMode>() {
            Ok(mode) => cli::cmd_error_grid(&config, mode, grid_n.unwrap_or(config.theta_grid)),
            Err(err) => {
                eprintln!("error: {err}");
                return ExitCode::from(2);
            }
        },
        Command::Herglotz { ells } => cli::cmd_herglotz(&config, ells),
        Command::Tmatrix => cli::cmd_tmatrix(&config),
    };

    match result {
        Ok(summary) => {
            for file in &summary.files {
                println!("wrote {}", file.display());
            }
            println!("pde solves: {}", summary.solve_count);
            for warning in &summary.warnings {
                eprintln!("warning: {warning}");
            }
            if config.strict && !summary.warnings.is_empty() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
