use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use flare_core::data::DEFAULT_HORIZON_HOURS;
use flare_core::{Climatology, ProbDist};

#[derive(Debug, Parser)]
#[command(
    name = "flare",
    version,
    about = "Solar flare loss, verification and toy training harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic imbalanced dataset (samples.csv, events.csv).
    GenData(GenDataArgs),
    /// Label samples with the largest flare in the following horizon.
    Label(LabelArgs),
    /// Verify predictions against labels.
    Eval(EvalArgs),
    /// Train the toy classifier and report on the test fold.
    Train(TrainArgs),
    /// Finite-difference check of the analytic loss gradients.
    Gradcheck(GradcheckArgs),
}

fn parse_probs(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; 4] = v
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 4 probabilities, got {}", v.len()))?;
    ProbDist::new(arr).map_err(|e| e.to_string())?;
    Ok(arr)
}

fn parse_climatology(s: &str) -> Result<Climatology, String> {
    if s == "rows" {
        Ok(Climatology::FromMatrixRows)
    } else {
        parse_probs(s).map(Climatology::Explicit)
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Number of samples.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Class probabilities for O,C,M,X.
    #[arg(long, default_value = "0.38,0.35,0.23,0.04", value_parser = parse_probs)]
    pub class_probs: [f64; 4],
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub feature_dim: u64,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, default_value_t = DEFAULT_HORIZON_HOURS, value_parser = parse_positive)]
    pub horizon_hours: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// `rows` for the observed class frequencies, or four probabilities.
    #[arg(long, default_value = "rows", value_parser = parse_climatology)]
    pub climatology: Climatology,
    /// Directory for report.txt/report.csv; defaults to the predictions' directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Override a config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, hide = true)]
    pub corrupt_gradient: Option<f64>,
}
