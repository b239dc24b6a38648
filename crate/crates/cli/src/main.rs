use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hypent::{exit, list_builtins, run, Experiment, ExperimentSpec, Parameters, RunError};

/// Entropy, transfer-operator and measure experiments for piecewise-affine hyperbolic maps.
#[derive(Parser, Debug)]
#[command(name = "hypent", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cell counts #M_0^n.
    Counts(RunArgs),
    /// Counts plus the h* regression.
    Hstar(RunArgs),
    /// Hyperbolicity and complexity certificates, growth-lemma checks.
    Growth(RunArgs),
    /// One-step expansion constant.
    Onestep(RunArgs),
    /// Ulam operator, leading eigenvalues and spectral gap.
    Spectrum(RunArgs),
    /// Measure of maximal entropy.
    Mme(RunArgs),
    /// Decay of correlations under μ*.
    Correlations(RunArgs),
    /// Bowen-ball masses at sampled centres.
    Bowen(RunArgs),
    /// Periodic point census.
    Periodic(RunArgs),
    /// μ* mass of neighbourhoods of the singular curves.
    Neighborhood(RunArgs),
    /// Counts, h*, spectrum, μ*, periodic points and the estimator comparison.
    FullReport(RunArgs),
    /// Agreement of the three entropy estimators.
    Compare(RunArgs),
    /// Print the builtin maps.
    ListBuiltins,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Builtin name or path to a JSON map document.
    #[arg(long)]
    map: String,
    #[arg(long)]
    n_max: Option<usize>,
    /// Operator depth k (cells of M_{-k}^k).
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, default_value = "hypent-out")]
    out: PathBuf,
    /// Recorded in the report; stages run on one thread.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON parameter block; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn build_spec(experiment: Experiment, a: RunArgs) -> Result<ExperimentSpec, RunError> {
    let mut params = match &a.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
            Parameters::from_json(&text)?
        }
        None => Parameters::default(),
    };
    if let Some(n) = a.n_max {
        params.n_max = n;
    }
    if let Some(d) = a.depth {
        params.depth = d;
    }
    if let Some(d) = a.delta0 {
        params.delta0 = d;
    }
    if let Some(q) = a.q {
        params.q = q;
    }
    Ok(ExperimentSpec { map: a.map, experiment, params, out: a.out, seed: a.seed, threads: a.threads })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::ListBuiltins => {
            print!("{}", list_builtins());
            return ExitCode::SUCCESS;
        }
        Command::Counts(a) => (Experiment::Counts, a),
        Command::Hstar(a) => (Experiment::Hstar, a),
        Command::Growth(a) => (Experiment::Growth, a),
        Command::Onestep(a) => (Experiment::Onestep, a),
        Command::Spectrum(a) => (Experiment::Spectrum, a),
        Command::Mme(a) => (Experiment::Mme, a),
        Command::Correlations(a) => (Experiment::Correlations, a),
        Command::Bowen(a) => (Experiment::Bowen, a),
        Command::Periodic(a) => (Experiment::Periodic, a),
        Command::Neighborhood(a) => (Experiment::Neighborhood, a),
        Command::FullReport(a) => (Experiment::FullReport, a),
        Command::Compare(a) => (Experiment::Compare, a),
    };
    let result = build_spec(experiment, args).and_then(run);
    match result {
        Ok(report) => {
            for c in &report.checks {
                let status = match (c.passed, c.hard) {
                    (true, _) => "PASS",
                    (false, true) => "FAIL",
                    (false, false) => "WARN",
                };
                println!("{status} {}: {}", c.name, c.detail);
            }
            println!(
                "{} on {}: {} artifacts in {} ({:.2} s)",
                report.spec.experiment,
                report.spec.map,
                report.artifacts.len(),
                report.spec.out.display(),
                report.wall_clock_seconds
            );
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code().clamp(exit::ASSERTION, 255) as u8)
        }
    }
}
