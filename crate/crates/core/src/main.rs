use clap::{Parser, Subcommand};
use num_complex::Complex64;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use dipole_jumps::analytic_rates::{rates_exact, rates_first_order};
use dipole_jumps::atomic_model::{DipoleCoupling, ModelParams};
use dipole_jumps::cli_sweep::{params_from_map, parse_key_values, report_critical_detunings, summarize, sweep, to_csv, SweepConfig};
use dipole_jumps::telegraph_stats::ideal_statistics;
use dipole_jumps::{Error, Result};

#[derive(Parser)]
#[command(name = "dipole-jumps", version, about = "Quantum-jump statistics of two dipole-coupled three-level atoms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the atom separation and write one CSV row per grid point.
    Sweep {
        config: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// CSV path; overrides the `output` key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transition rates and telegraph statistics for one coupling constant.
    Rates {
        #[arg(long, default_value_t = 1.0)]
        a3: f64,
        #[arg(long, default_value_t = 0.01)]
        omega2: f64,
        #[arg(long, default_value_t = 0.5)]
        omega3: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        delta2: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        re_c3: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        im_c3: f64,
    },
    /// Detunings at which the first-order coupling dependence vanishes.
    CriticalDetunings { config: PathBuf },
}

fn run_sweep(config: &Path, jobs: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let cfg = SweepConfig::from_file(config)?;
    let path = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| config.with_extension("csv"));
    let rows = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| sweep(&cfg))?,
        None => sweep(&cfg)?,
    };
    std::fs::write(&path, to_csv(&rows))?;
    let summary = summarize(&cfg, &rows, Some(&path));
    println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| Error::Numerical(e.to_string()))?);
    Ok(())
}

fn run_rates(params: ModelParams, coupling: DipoleCoupling) -> Result<()> {
    let first = rates_first_order(&params, &coupling)?;
    let exact = rates_exact(&params, &coupling)?;
    let stats = ideal_statistics(&exact, 160.0)?;
    let out = serde_json::json!({
        "first_order": first,
        "exact": exact,
        "statistics": stats,
        "warnings": params.regime_warnings(),
    });
    println!("{}", serde_json::to_string_pretty(&out).map_err(|e| Error::Numerical(e.to_string()))?);
    Ok(())
}

fn run_critical(config: &Path) -> Result<()> {
    let params = params_from_map(&parse_key_values(&std::fs::read_to_string(config)?)?)?;
    let rep = report_critical_detunings(&params)?;
    println!("{}", serde_json::to_string_pretty(&rep).map_err(|e| Error::Numerical(e.to_string()))?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Sweep { config, jobs, out } => run_sweep(&config, jobs, out),
        Command::Rates { a3, omega2, omega3, delta2, re_c3, im_c3 } => ModelParams::new(a3, omega2, omega3, delta2)
            .and_then(|p| run_rates(p, DipoleCoupling::new(Complex64::new(re_c3, im_c3)))),
        Command::CriticalDetunings { config } => run_critical(&config),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
