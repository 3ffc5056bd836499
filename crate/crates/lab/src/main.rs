use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use agf_core::fvm::{suggest_dt, suggest_dt_for, Mode};
use agf_core::{EntropyPair, Field, Grid1D};
use agf_lab::scenario::{density_field, ModelSpec, PRESETS};
use agf_lab::{compare_outputs, preset, run_scenario, validate_config, LabError, RunOptions, Scenario};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "agf",
    version,
    about = "Cross-diffusion among obstacles: PDE, equilibria and particle runs"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunFlags {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed for particle runs.
    #[arg(long)]
    seed: Option<u64>,
    /// Published resolution and realization counts.
    #[arg(long)]
    paper_scale: bool,
    /// PDE time step to use even when it exceeds the stability bound.
    #[arg(long, value_name = "DT")]
    override_dt: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run a built-in scenario: figure1, figure2 or figure3.
    Preset {
        name: String,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Compare two output directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Largest accepted absolute difference.
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
    },
    /// Print derived coefficients and step bounds.
    Params {
        /// Read the model from a scenario file instead of the flags.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        n_red: usize,
        #[arg(long, default_value_t = 500)]
        n_blue: usize,
        #[arg(long, default_value_t = 0.01)]
        diam_red: f64,
        #[arg(long, default_value_t = 0.015)]
        diam_blue: f64,
        #[arg(long, default_value_t = 2)]
        dim: u32,
        /// Cells for the step bounds.
        #[arg(long, default_value_t = 1000)]
        n_cells: usize,
    },
}

fn execute(scenario: Scenario, flags: RunFlags, notices: Vec<String>) -> Result<ExitCode, LabError> {
    for n in &notices {
        log::warn!("{n}");
    }
    let scenario = if flags.paper_scale {
        scenario.paper_scale()
    } else {
        scenario
    };
    let opts = RunOptions {
        seed: flags.seed,
        override_dt: flags.override_dt,
    };
    let report = run_scenario(&scenario, &opts, &flags.out)?;
    println!("scenario={} hash={}", report.scenario.name, report.hash);
    for r in &report.rates {
        println!(
            "rate {} {} lambda_fit={} r2={}",
            r.run, r.pair, r.lambda_fit, r.r_squared
        );
    }
    if let Some(a) = report.metropolis_acceptance {
        println!("metropolis acceptance={a}");
    }
    println!("wrote {} files to {}", report.files.len(), flags.out.display());
    Ok(ExitCode::SUCCESS)
}

fn params(config: Option<PathBuf>, model: ModelSpec, n_cells: usize) -> Result<ExitCode, LabError> {
    let (model, obstacles, n_cells) = match config {
        Some(path) => {
            let v = validate_config(&path)?;
            (v.scenario.model, v.scenario.obstacles, v.scenario.solver.n_cells)
        }
        None => (model, "convex".to_string(), n_cells),
    };
    let p = model.params().map_err(|e| LabError::Key {
        key: "model".into(),
        reason: e.to_string(),
    })?;
    let grid = Grid1D::unit(n_cells.max(4)).expect("unit grid");
    let (b, _) = density_field(&obstacles, "obstacles.density", grid)?;
    let r = Field::constant(grid, 1.0);
    let mut out = String::new();
    let _ = writeln!(out, "eps1={:?}", p.eps1);
    let _ = writeln!(out, "eps2={:?}", p.eps2);
    let _ = writeln!(out, "eps3={:?}", p.eps3);
    if p.n_red > 0 {
        let _ = writeln!(out, "volume_fraction={:?}", p.volume_fraction(1.0).unwrap_or(f64::NAN));
    }
    let _ = writeln!(out, "c1={:?}", p.feasible_set().c1(&b));
    let dt = suggest_dt(&r, &b, &p);
    let _ = writeln!(out, "n_cells={}", grid.n_cells());
    let _ = writeln!(out, "suggest_dt_agf={dt:?}");
    for pair in [EntropyPair::Pair1, EntropyPair::Pair2, EntropyPair::pair3_default()] {
        let mode = Mode::Gradient(pair);
        match suggest_dt_for(&r, &b, &p, mode) {
            Ok(v) => _ = writeln!(out, "suggest_dt_{}={v:?}", mode.label().to_lowercase()),
            Err(e) => _ = writeln!(out, "suggest_dt_{}=NaN # {e}", mode.label().to_lowercase()),
        }
    }
    let _ = writeln!(out, "paper_dt_over_bound={:?}", 1e-6 / dt);
    // A closed pipe (`agf params | head`) is not an error.
    let _ = std::io::stdout().write_all(out.as_bytes());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Run { config, flags } => validate_config(&config).and_then(|v| execute(v.scenario, flags, v.notices)),
        Command::Preset { name, flags } => match preset(&name) {
            Some(s) => execute(s, flags, Vec::new()),
            None => {
                eprintln!("error: unknown preset `{name}`; choose one of {}", PRESETS.join(", "));
                return ExitCode::from(2);
            }
        },
        Command::Compare { a, b, tol } => compare_outputs(&a, &b).map(|report| {
            for c in &report.columns {
                println!(
                    "{} {} max_abs={} l2={}{}",
                    c.file,
                    c.column,
                    c.max_abs,
                    c.l2,
                    if c.interpolated { " (interpolated)" } else { "" }
                );
            }
            if report.within(tol) {
                println!("ok: max_abs={} <= tol={tol}", report.max_abs());
                ExitCode::SUCCESS
            } else {
                println!("FAIL: max_abs={} > tol={tol}", report.max_abs());
                ExitCode::from(1)
            }
        }),
        Command::Params {
            config,
            n_red,
            n_blue,
            diam_red,
            diam_blue,
            dim,
            n_cells,
        } => params(
            config,
            ModelSpec::Particles {
                n_red,
                n_blue,
                diam_red,
                diam_blue,
                dim,
            },
            n_cells,
        ),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
