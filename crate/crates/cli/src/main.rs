use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

/// Matrix Riccati solver and global-existence certificate checker.
#[derive(Debug, Parser)]
#[command(name = "riccati", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the equation and write the trajectory as CSV.
    Solve(SolveArgs),
    /// Check certificate conditions and the initial value, then monitor a run.
    Certify(CertifyArgs),
    /// Classify and integrate a one-parameter family of initial values.
    Scan(ScanArgs),
    /// Run the seeded randomized trace and congruence suites.
    CheckLemmas(LemmaArgs),
    /// Check the sandwich 0 <= Z <= Z~ against the linear comparison equation.
    Compare(CompareArgs),
    /// Write the bundled example configurations to a directory.
    Examples(ExamplesArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; defaults to the config's `output` section, then stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[command(flatten)]
    pub integrator: IntegratorFlags,
}

#[derive(Debug, Args)]
pub struct IntegratorFlags {
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub h_min: Option<f64>,
    #[arg(long)]
    pub blowup_threshold: Option<f64>,
    #[arg(long)]
    pub blowup_step: Option<f64>,
    #[arg(long)]
    pub output_step: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CertFlags {
    /// Check points per unit time [default: config, else 64].
    #[arg(long)]
    pub grid_density: Option<f64>,
    /// Condition tolerance [default: config, else 1e-9].
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = riccati_core::certify::DEFAULT_MONITOR_TOL)]
    pub monitor_tol: f64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub cert: CertFlags,
    /// Skip integration and monitoring.
    #[arg(long)]
    pub no_solve: bool,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub cert: CertFlags,
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: Option<u64>,
    /// Compute rows on one thread.
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Args)]
pub struct LemmaArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Write the per-suite results as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub grid_density: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExamplesArgs {
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RICCATI_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Certify(a) => commands::certify(&a),
        Command::Scan(a) => commands::scan(&a),
        Command::CheckLemmas(a) => commands::check_lemmas(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Examples(a) => commands::examples(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let input = e
                .chain()
                .any(|c| c.is::<riccati_core::config::ConfigError>());
            ExitCode::from(if input {
                commands::EXIT_INPUT
            } else {
                commands::EXIT_INTERNAL
            })
        }
    }
}
