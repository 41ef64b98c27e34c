use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use survuq::calibration::LossScale;
use survuq::coxph::TieMethod;
use survuq::evaluation::DEFAULT_MIN_RETAINED;
use survuq::uq::DEFAULT_GROUPS;

#[derive(Debug, Parser)]
#[command(name = "survuq", version, about = "Personalized uncertainty scores for survival models")]
pub struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0, env = "SURVUQ_THREADS")]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort with model predictions and ground truth.
    Gen(GenArgs),
    /// Fit a Cox proportional hazards model and optionally export curves.
    FitCox(FitCoxArgs),
    /// Personalized uncertainty scores and threshold sweeps.
    #[command(subcommand)]
    Uq(UqCommand),
    /// C-index, integrated Brier score and fixed-horizon AUC.
    Metrics(MetricsArgs),
    /// Scores, sweep and metrics in one report.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum UqCommand {
    /// Score every test patient against the training cohort (CSV: id,uq).
    Score(ScoreArgs),
    /// AUC of test-set predictions restricted to patients above each UQ threshold.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    /// Synthetic cohort configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output files are written as `<prefix>_train.csv`, `<prefix>_schema.json`, ...
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FitCoxArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Fitted model (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Time grid for exported curves.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Curves for the training cohort.
    #[arg(long, requires = "grid")]
    pub pred_out: Option<PathBuf>,
    /// Held-out cohort to predict.
    #[arg(long, requires_all = ["grid", "test_pred_out"])]
    pub test: Option<PathBuf>,
    #[arg(long, requires = "test")]
    pub test_pred_out: Option<PathBuf>,
    #[arg(long, default_value = "efron", value_parser = parse_ties)]
    pub ties: TieMethod,
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    pub ridge: f64,
    #[arg(long, default_value_t = 1e-9, value_parser = positive)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Fit on unit-variance columns and report coefficients on the original scale.
    #[arg(long)]
    pub standardize: bool,
}

/// Inputs shared by everything that scores patients.
#[derive(Debug, Args, Serialize)]
pub struct ScoreInputs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub pred_train: PathBuf,
    #[arg(long)]
    pub pred_test: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Nomogram definition (JSON); the built-in intracranial-progression
    /// nomogram when omitted.
    #[arg(long)]
    pub nomogram: Option<PathBuf>,
    /// Grid for prediction files without a `__grid__` row.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Number of similarity groups.
    #[arg(long, default_value_t = DEFAULT_GROUPS, value_parser = clap::value_parser!(usize), env = "SURVUQ_GROUPS")]
    pub groups: usize,
    #[arg(long, default_value = "raw", value_parser = parse_scale, env = "SURVUQ_LOSS_SCALE")]
    pub loss_scale: LossScale,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub inputs: ScoreInputs,
    /// Scores CSV (id,uq).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ThresholdArgs {
    /// Classification horizon (same units as the survival times).
    #[arg(long, value_parser = positive, env = "SURVUQ_HORIZON")]
    pub horizon: f64,
    /// Number of evenly spaced UQ thresholds on [0, 1].
    #[arg(long, default_value_t = 101, conflicts_with = "threshold_values")]
    pub thresholds: usize,
    /// Explicit comma-separated UQ thresholds.
    #[arg(long, value_delimiter = ',')]
    pub threshold_values: Option<Vec<f64>>,
    /// Smallest retained subset for which an AUC is reported.
    #[arg(long, default_value_t = DEFAULT_MIN_RETAINED, env = "SURVUQ_MIN_RETAINED")]
    pub min_retained: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub pred_test: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Scores CSV written by `uq score`.
    #[arg(long)]
    pub uq: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub thresholds: ThresholdArgs,
    /// Report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Sweep curve as CSV (uq_threshold,n_retained,n_positive,n_negative,auc).
    #[arg(long)]
    pub curve_csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MetricsArgs {
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub pred_test: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, value_parser = positive, env = "SURVUQ_HORIZON")]
    pub horizon: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub inputs: ScoreInputs,
    #[command(flatten)]
    #[serde(flatten)]
    pub thresholds: ThresholdArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub curve_csv: Option<PathBuf>,
    /// Also write the per-patient scores (id,uq).
    #[arg(long)]
    pub scores_out: Option<PathBuf>,
}

fn parse_ties(s: &str) -> Result<TieMethod, String> {
    s.parse()
}

fn parse_scale(s: &str) -> Result<LossScale, String> {
    s.parse()
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("'{s}' is not a finite number > 0")),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("'{s}' is not a finite number >= 0")),
    }
}
