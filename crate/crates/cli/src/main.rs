//! `hjlab`: run game, verification and smoothing experiments from problem files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hjlab::commands::{self, RunFlags, EXIT_CONFIG};
use hjlab::problem::{parse_problem, CommandName, ProblemFile};

#[derive(Parser, Debug)]
#[command(name = "hjlab", version, about = "Path-dependent Hamilton–Jacobi and time-delay game experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lower and upper game values by exact tree search.
    SolveGame(Common),
    /// Check that the candidate is an upper, lower and minimax solution.
    CheckMinimax(Common),
    /// L1 distance between the Hamiltonian and its Steklov averages.
    Smooth(Common),
    /// Finite-difference ci-derivatives and HJ residual of the candidate.
    CiDeriv(Common),
    /// Compare the candidates of two problems.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Problem with the dominating Hamiltonian.
        #[arg(long)]
        against: PathBuf,
    },
    /// Game values over a sequence of step counts.
    Refine(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Problem file (JSON).
    problem: PathBuf,
    /// Tree steps (solve-game, refine) or chain stages (check-minimax).
    #[arg(long)]
    steps: Option<usize>,
    /// Override the problem's time step.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Absolute tolerance for verdicts.
    #[arg(long)]
    tol: Option<f64>,
    /// Node budget for tree searches.
    #[arg(long, env = "HJLAB_NODE_BUDGET")]
    budget: Option<u64>,
    /// Directory for the report, CSV tables and timings.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(path: &PathBuf) -> Result<ProblemFile, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_problem(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, against) = match cli.command {
        Command::SolveGame(c) => (CommandName::SolveGame, c, None),
        Command::CheckMinimax(c) => (CommandName::CheckMinimax, c, None),
        Command::Smooth(c) => (CommandName::Smooth, c, None),
        Command::CiDeriv(c) => (CommandName::CiDeriv, c, None),
        Command::Compare { common, against } => (CommandName::Compare, common, Some(against)),
        Command::Refine(c) => (CommandName::Refine, c, None),
    };
    let file = match load(&common.problem) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let against = match against.as_ref().map(load).transpose() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let flags = RunFlags {
        steps: common.steps,
        dt: common.dt,
        seed: common.seed,
        tol: common.tol,
        budget: common.budget,
        threads: common.threads,
    };
    let outcome = commands::run(name, &file, against.as_ref(), &flags);
    print!("{}", commands::render(&outcome.report));
    if let Some(err) = outcome.report.get("error") {
        eprintln!("error: {}", err.as_str().unwrap_or_default());
    }
    if let Some(dir) = &common.out_dir {
        if let Err(e) = commands::write_artifacts(&outcome, dir) {
            eprintln!("error: writing artifacts to {}: {e}", dir.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    ExitCode::from(outcome.exit_code as u8)
}
