use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mimgan_core::anomaly::Threshold;
use mimgan_core::{ObjectiveKind, OptimizerKind};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "mimgan", version, about = "MIM-based GAN experiments")]
pub struct Cli {
    /// Seed for every random stream of the run.
    #[arg(long, global = true, env = "MIMGAN_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Output directory, created if missing [default: out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Write a synthetic dataset to <out>/data.csv.
    Synth(SynthArgs),
    /// Train a GAN and save both networks and the training log.
    Train(TrainArgs),
    /// Fixed-discriminator generator curves across objectives.
    Curves(CurvesArgs),
    /// Closed-form tables.
    Analyze(AnalyzeArgs),
    /// Score a CSV of samples with trained networks.
    Detect(DetectArgs),
    /// ROC, AUC and F1 of a score report.
    Eval(EvalArgs),
    /// Re-run the command recorded in a manifest.
    ///
    /// Uses the recorded seed. Outputs go to the recorded directory unless
    /// --out is given.
    #[serde(skip)]
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Curves(_) => "curves",
            Command::Analyze(_) => "analyze",
            Command::Detect(_) => "detect",
            Command::Eval(_) => "eval",
            Command::Replay(_) => "replay",
        }
    }
}

/// `gauss`, `synth` or `csv:<path>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DataSource {
    Gauss,
    Synth,
    Csv(PathBuf),
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gauss" => Ok(DataSource::Gauss),
            "synth" => Ok(DataSource::Synth),
            _ => match s.strip_prefix("csv:") {
                Some(p) if !p.is_empty() => Ok(DataSource::Csv(PathBuf::from(p))),
                _ => Err(format!("expected gauss, synth or csv:<path>, got '{s}'")),
            },
        }
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Gauss => f.write_str("gauss"),
            DataSource::Synth => f.write_str("synth"),
            DataSource::Csv(p) => write!(f, "csv:{}", p.display()),
        }
    }
}

impl TryFrom<String> for DataSource {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<DataSource> for String {
    fn from(d: DataSource) -> String {
        d.to_string()
    }
}

fn parse_objective(s: &str) -> Result<ObjectiveKind, String> {
    s.parse().map_err(|e: mimgan_core::Error| e.to_string())
}

fn parse_threshold(s: &str) -> Result<Threshold, String> {
    s.parse().map_err(|e: mimgan_core::Error| e.to_string())
}

fn parse_unit_open(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("expected a number strictly between 0 and 1, got '{s}'")),
    }
}

fn parse_d_pretrain(s: &str) -> Result<usize, String> {
    match s {
        "500" | "1000" | "1500" => Ok(s.parse().expect("literal")),
        _ => Err(format!("expected 500, 1000 or 1500, got '{s}'")),
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

impl From<OptimizerArg> for OptimizerKind {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Adam => OptimizerKind::Adam,
        }
    }
}

/// Parameters of the built-in data generators.
#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorArgs {
    /// Gaussian: number of samples.
    #[arg(long, default_value_t = 16_000)]
    pub n: usize,
    /// Gaussian: mean.
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    pub mu: f64,
    /// Gaussian: standard deviation.
    #[arg(long, default_value_t = 1.25)]
    pub sigma: f64,
    /// Benchmark: number of normal rows.
    #[arg(long, default_value_t = 950)]
    pub n_normal: usize,
    /// Benchmark: number of anomalous rows.
    #[arg(long, default_value_t = 50)]
    pub n_anomaly: usize,
    /// Benchmark: feature count.
    #[arg(long, default_value_t = 6)]
    pub dim: usize,
    /// Benchmark: offset of the anomaly mean along every axis.
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub separation: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SynthArgs {
    /// `gauss` or `synth`.
    #[arg(long, default_value = "synth")]
    pub data: DataSource,
    #[command(flatten)]
    pub gen: GeneratorArgs,
}

/// Network and optimiser shape shared by `train` and `curves`.
#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Hidden widths, shared by both networks.
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    pub latent_dim: usize,
    /// Optimiser of both players [default: adam for train, sgd for curves].
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Discriminator steps per generator step.
    #[arg(long, default_value_t = 1)]
    pub d_steps: usize,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_objective, default_value = "mim")]
    pub objective: ObjectiveKind,
    /// `gauss`, `synth` or `csv:<path>`.
    #[arg(long, default_value = "gauss")]
    pub data: DataSource,
    /// Label column of a CSV source; labelled data trains on normals only.
    #[arg(long)]
    pub label_col: Option<String>,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    /// Share of normal rows used for training when labels exist.
    #[arg(long, value_parser = parse_unit_open, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub gen: GeneratorArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CurvesArgs {
    /// Objectives to compare.
    #[arg(long = "objective", value_parser = parse_objective, value_delimiter = ',', default_value = "mim,kl,ls,w")]
    pub objectives: Vec<ObjectiveKind>,
    /// Iterations of ordinary training before the discriminator is frozen.
    #[arg(long, value_parser = parse_d_pretrain, value_delimiter = ',', default_value = "500,1000,1500")]
    pub d_pretrain: Vec<usize>,
    /// Generator-only steps against the frozen discriminator.
    #[arg(long, default_value_t = 1000)]
    pub g_iters: usize,
    /// Real rows and latent draws per generator-only step.
    #[arg(long, default_value_t = 16_000)]
    pub curve_samples: usize,
    /// `gauss` or `csv:<path>`.
    #[arg(long, default_value = "gauss")]
    pub data: DataSource,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub gen: GeneratorArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Table {
    /// Rare-event proportions, exact and approximate.
    Upsilon,
    /// Gradient stability factors.
    Stability,
    /// Order-½ Renyi divergences on the binary family.
    Renyi,
    /// Objective values at the optimal discriminator on the binary family.
    Equilibrium,
}

impl Table {
    pub fn name(self) -> &'static str {
        match self {
            Table::Upsilon => "upsilon",
            Table::Stability => "stability",
            Table::Renyi => "renyi",
            Table::Equilibrium => "equilibrium",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    #[arg(long, value_enum)]
    pub table: Table,
    /// Probability of the rare atom; omit for the standard grid.
    #[arg(long)]
    pub p: Option<f64>,
    /// Disturbance; omit for the standard grid.
    #[arg(long, allow_negative_numbers = true)]
    pub eps: Option<f64>,
    /// Exponent of the disturbance; omit for the standard grid.
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DetectArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub models: PathBuf,
    /// CSV of samples in the training data's units.
    #[arg(long)]
    pub input: PathBuf,
    /// Label column of the input, if any.
    #[arg(long)]
    pub label_col: Option<String>,
    /// Weight of the discriminator term in the reconstruction loss.
    #[arg(long, value_parser = parse_unit_open, default_value_t = 0.1)]
    pub lambda: f64,
    /// Weight of the discriminator term in the anomaly score.
    #[arg(long, value_parser = parse_unit_open, default_value_t = 0.05)]
    pub eta: f64,
    /// `auto` (max F1, needs labels) or a number.
    #[arg(long, value_parser = parse_threshold, default_value = "auto")]
    pub gamma_threshold: Threshold,
    /// Adam steps of latent inversion per sample.
    #[arg(long, default_value_t = 500)]
    pub inv_iters: usize,
    /// Adam step size of latent inversion.
    #[arg(long, default_value_t = 0.003)]
    pub inv_lr: f64,
    /// Order of the reconstruction norm.
    #[arg(long, default_value_t = 2)]
    pub p_norm: u32,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Score report written by `detect`.
    #[arg(long)]
    pub scores: PathBuf,
    /// Re-threshold instead of using the report's decisions.
    #[arg(long, value_parser = parse_threshold)]
    pub gamma_threshold: Option<Threshold>,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}
