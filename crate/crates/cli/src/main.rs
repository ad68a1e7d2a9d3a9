mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EvaluateArgs, ForecastArgs, GenDataArgs, TrainArgs, VerifyArgs};

#[derive(Parser)]
#[command(name = "pdecast", version, about = "Stable latent forecasting of 1-D periodic PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train / val / forecast datasets.
    GenData(GenDataArgs),
    /// Train a model from a run configuration file.
    Train(TrainArgs),
    /// Roll a model out over a forecast dataset and write its error curve.
    Forecast(ForecastArgs),
    /// One-step metrics of a model on a dataset.
    Evaluate(EvaluateArgs),
    /// Run randomised verification suites.
    Verify(VerifyArgs),
}

pub enum Failure {
    Usage(String),
    Numerical(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Verification(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<pdecast_core::Error> for Failure {
    fn from(e: pdecast_core::Error) -> Self {
        use pdecast_core::Error as E;
        match e {
            E::SolverBlowup { .. } | E::NotConverged { .. } | E::TrainingDiverged { .. } | E::HypothesisViolated(_) => {
                Failure::Numerical(e.to_string())
            }
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
