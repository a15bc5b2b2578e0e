use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;

/// Optimal-transport pseudo-label assignment: solvers, pseudo labels,
/// image-corpus metrics and the toy training harness.
#[derive(Parser, Debug)]
#[command(name = "otassign", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one entropic transport problem with a uniform class prior.
    SolveOt(SolveOtArgs),
    /// Turn teacher probabilities into gated transport pseudo labels.
    Assign(AssignArgs),
    /// GLCM and compression-ratio scores for a directory of images.
    Metrics(MetricsArgs),
    /// Train one toy run.
    ToyTrain(RunArgs),
    /// Paired OT-on / OT-off toy runs over consecutive seeds.
    Ablate(AblateArgs),
    /// Score dumped predictions against the toy evaluation set.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct SolveOtArgs {
    /// Cost matrix, OTCM binary or CSV.
    #[arg(long)]
    cost: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    /// L1 marginal violation at which the solver stops.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Output plan (OTPL).
    #[arg(long)]
    out: PathBuf,
    /// Also solve the unregularized problem exactly and report the gap.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args, Debug)]
struct AssignArgs {
    /// Teacher probabilities (PTEN).
    #[arg(long)]
    probs: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    dir: PathBuf,
    /// Per-image CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// `key=value` training config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Number of consecutive seeds, starting at the config seed.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory of `eval_NNN.png` label maps.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::SolveOt(a) => commands::solve_ot(&a),
        Command::Assign(a) => commands::assign(&a),
        Command::Metrics(a) => commands::metrics(&a),
        Command::ToyTrain(a) => commands::toy_train(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Eval(a) => commands::eval(&a),
    };
    match outcome {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
