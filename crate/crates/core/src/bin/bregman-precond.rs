use std::path::PathBuf;
use std::process::ExitCode;

use bregman_precond::experiment::{
    run_analyze, run_fourdvar, run_solve, run_synthetic, write_analyze, write_fourdvar, write_solve, write_synthetic,
    ConfigOverrides, ExperimentConfig, ExperimentKind,
};
use clap::{Args, Parser, Subcommand};

/// Benchmark harness for Bregman log-det optimal preconditioners of S = A + B.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic A + B problems with prescribed spectra.
    Synthetic(Flags),
    /// Weak-constraint 4D-VAR heat-equation system.
    Fourdvar(Flags),
    /// Divergence term matrices and generalized eigenvalues.
    Analyze(Flags),
    /// Ad-hoc solve of (A + B) x = b from Matrix Market files.
    Solve(SolveFlags),
}

#[derive(Args)]
struct Flags {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    oversample: Option<usize>,
    #[arg(long)]
    power: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    maxit: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Use the full-size problems (slow; see README).
    #[arg(long)]
    full_scale: bool,
}

#[derive(Args)]
struct SolveFlags {
    #[command(flatten)]
    common: Flags,
    /// SPD matrix A (Matrix Market).
    #[arg(long)]
    matrix_a: Option<PathBuf>,
    /// PSD matrix B (Matrix Market).
    #[arg(long)]
    matrix_b: Option<PathBuf>,
    /// Right-hand side as an n × 1 Matrix Market array; random if omitted.
    #[arg(long)]
    rhs: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            seed: self.seed,
            out: self.out.clone(),
            rank: self.rank,
            oversample: self.oversample,
            power: self.power,
            tol: self.tol,
            maxit: self.maxit,
            trials: self.trials,
            full_scale: self.full_scale.then_some(true),
            ..Default::default()
        }
    }
}

fn resolve(kind: ExperimentKind, flags: &Flags, extra: ConfigOverrides) -> bregman_precond::Result<ExperimentConfig> {
    let file = flags.config.as_deref().map(ConfigOverrides::from_json_file).transpose()?;
    let mut o = flags.overrides();
    o.matrix_a = extra.matrix_a;
    o.matrix_b = extra.matrix_b;
    o.rhs = extra.rhs;
    ExperimentConfig::resolve(kind, file.as_ref(), &o)
}

fn run(cli: Cli) -> bregman_precond::Result<()> {
    match cli.command {
        Command::Synthetic(f) => {
            let cfg = resolve(ExperimentKind::Synthetic, &f, Default::default())?;
            write_synthetic(&run_synthetic(&cfg)?)?;
            println!("wrote {}", cfg.out.display());
        }
        Command::Fourdvar(f) => {
            let cfg = resolve(ExperimentKind::Fourdvar, &f, Default::default())?;
            let out = run_fourdvar(&cfg)?;
            write_fourdvar(&out)?;
            if let Some(k) = out.kappa {
                println!("κ₂(S) ≈ {:.4e} ({} Lanczos steps)", k.kappa, k.lanczos_steps);
                println!("κ₁(S) ≈ {:.4e} (‖S‖₁ ‖S⁻¹‖₁, Hager estimate)", k.kappa_1);
            }
            println!("wrote {}", cfg.out.display());
        }
        Command::Analyze(f) => {
            let cfg = resolve(ExperimentKind::Analyze, &f, Default::default())?;
            write_analyze(&run_analyze(&cfg)?)?;
            println!("wrote {}", cfg.out.display());
        }
        Command::Solve(f) => {
            let extra = ConfigOverrides {
                matrix_a: f.matrix_a,
                matrix_b: f.matrix_b,
                rhs: f.rhs,
                ..Default::default()
            };
            let cfg = resolve(ExperimentKind::Solve, &f.common, extra)?;
            write_solve(&run_solve(&cfg)?)?;
            println!("wrote {}", cfg.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
