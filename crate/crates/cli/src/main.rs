//! Command-line front end for the radar detection pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/processing error.

mod commands;
mod config;

use clap::{Parser, Subcommand};

use commands::{ablate, eval, infer, label, plot, simulate, train};

#[derive(Parser)]
#[command(
    name = "raddet",
    about = "Synthetic radar object detection and heading estimation pipeline",
    long_about = "End-to-end pipeline on synthetic radar spectra: scene simulation, \
                  target labeling, training, inference, evaluation, and map plotting.\n\n\
                  Every subcommand accepts --config FILE with flat `key = value` lines \
                  (keys are the long flag names); config values override flags, which \
                  override built-in defaults."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Simulate(simulate::SimulateArgs),
    /// Build training target maps for a dataset.
    Label(label::LabelArgs),
    /// Train a detector and write checkpoint + log.
    Train(train::TrainArgs),
    /// Run a checkpoint over a split and write JSON-lines detections.
    Infer(infer::InferArgs),
    /// Evaluate a checkpoint (or the ground-truth oracle) over a split.
    Eval(eval::EvalArgs),
    /// Train at several stacked-frame depths and tabulate heading accuracy.
    AblateFrames(ablate::AblateArgs),
    /// Render maps to PGM or detections to an arrow CSV.
    Plot(plot::PlotArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let argv = match config::expand_config_args(std::env::args_os()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path as well
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    let result = match cli.command {
        Command::Simulate(args) => simulate::run(args),
        Command::Label(args) => label::run(args),
        Command::Train(args) => train::run(args),
        Command::Infer(args) => infer::run(args),
        Command::Eval(args) => eval::run(args),
        Command::AblateFrames(args) => ablate::run(args),
        Command::Plot(args) => plot::run(args),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
