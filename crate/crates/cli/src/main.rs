mod data;
mod manifest;
mod mol;
mod node;
mod paths;
mod tools;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use patchforge::Error;

#[derive(Parser, Debug)]
#[command(name = "patchforge", version, about = "Patch-sampled node classification and molecular graph regression")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Flags accepted by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Root seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Producer threads; overrides the config file.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Single ordered producer and zeroed manifest timestamps.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic citation heterograph.
    SynthMag(data::SynthMagArgs),
    /// Write a synthetic molecule dataset as train.tsv and valid.tsv.
    SynthMol(data::SynthMolArgs),
    /// Fit the paper-feature PCA of a graph.
    FitPca(data::FitPcaArgs),
    /// Train the node classifier.
    TrainNode(node::TrainNodeArgs),
    /// Train the molecular regressor.
    TrainMol(mol::TrainMolArgs),
    /// Predict node classes with multi-patch averaging.
    EvalNode(node::EvalNodeArgs),
    /// Predict molecular gaps, optionally with a non-conformer fallback.
    EvalMol(mol::EvalMolArgs),
    /// Assign validation items to k folds.
    Kfold(data::KfoldArgs),
    /// Average member prediction files.
    Ensemble(tools::EnsembleArgs),
    /// Measure patch sampling throughput.
    BenchSampler(tools::BenchArgs),
    /// Finite-difference gradient checks of primitives and both models.
    Gradcheck,
}

/// Shared `--config` / `--set` handling for training commands.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

fn run(cli: Cli) -> patchforge::Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::SynthMag(a) => data::synth_mag(a, g),
        Command::SynthMol(a) => data::synth_mol(a, g),
        Command::FitPca(a) => data::fit_pca(a, g),
        Command::TrainNode(a) => node::train(a, g),
        Command::TrainMol(a) => mol::train(a, g),
        Command::EvalNode(a) => node::eval(a, g),
        Command::EvalMol(a) => mol::eval(a, g),
        Command::Kfold(a) => data::kfold(a, g),
        Command::Ensemble(a) => tools::ensemble(a, g),
        Command::BenchSampler(a) => tools::bench(a, g),
        Command::Gradcheck => tools::gradcheck(g),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), one_line(&e));
            ExitCode::FAILURE
        }
    }
}

fn one_line(e: &Error) -> String {
    e.to_string().replace(['\n', '\r'], " ")
}
