use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use mimgan_core::anomaly::{self, AnomalyConfig, Threshold};
use mimgan_core::data::{self, Normalization, SplitMode, TabularDataset};
use mimgan_core::metrics::{roc_auc, Confusion};
use mimgan_core::training::{self, GanConfig};
use mimgan_core::{MlpModel, OptimizerConfig};
use serde::Serialize;

use crate::args::{
    AnalyzeArgs, Cli, Command, CurvesArgs, DataSource, DetectArgs, EvalArgs, GeneratorArgs, ModelArgs, OptimizerArg,
    SynthArgs, TrainArgs,
};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::{tables, UsageError};

const DEFAULT_OUT: &str = "out";
const GENERATOR_FILE: &str = "generator.model";
const DISCRIMINATOR_FILE: &str = "discriminator.model";
const NORMALIZATION_FILE: &str = "normalization.json";
/// Generated rows summarised after training.
const SUMMARY_SAMPLES: usize = 10_000;
const CURVE_WINDOW: usize = 500;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Replay(args) => {
            let manifest = RunManifest::read(&args.manifest)?;
            let out = cli.out.unwrap_or(manifest.out);
            execute(manifest.seed, out, manifest.command)
        }
        command => execute(cli.seed, cli.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)), command),
    }
}

/// Fills in defaults that depend on the subcommand so the manifest records
/// what actually ran.
fn resolve(mut command: Command) -> Command {
    match &mut command {
        Command::Train(a) => {
            a.model.optimizer.get_or_insert(OptimizerArg::Adam);
        }
        Command::Curves(a) => {
            a.model.optimizer.get_or_insert(OptimizerArg::Sgd);
        }
        _ => {}
    }
    command
}

fn execute(seed: u64, out: PathBuf, command: Command) -> Result<()> {
    let command = resolve(command);
    fs::create_dir_all(&out).with_context(|| format!("creating output directory {}", out.display()))?;
    let start = Instant::now();
    let outputs = match &command {
        Command::Synth(a) => synth(a, seed, &out),
        Command::Train(a) => train(a, seed, &out),
        Command::Curves(a) => curves(a, seed, &out),
        Command::Analyze(a) => analyze(a, &out),
        Command::Detect(a) => detect(a, seed, &out),
        Command::Eval(a) => eval(a, &out),
        Command::Replay(_) => bail!(UsageError("a manifest cannot record a replay".into())),
    }
    .with_context(|| format!("{} failed", command.name()))?;
    RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        out: out.clone(),
        command,
        outputs,
        duration_secs: start.elapsed().as_secs_f64(),
    }
    .write(&out)?;
    eprintln!("wrote {}", out.join(MANIFEST_FILE).display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_source(source: &DataSource, gen: &GeneratorArgs, label_col: Option<&str>, seed: u64) -> Result<TabularDataset> {
    Ok(match source {
        DataSource::Gauss => data::sample_gaussian(gen.mu, gen.sigma, gen.n, seed)?,
        DataSource::Synth => data::synth_anomaly_benchmark(gen.n_normal, gen.n_anomaly, gen.dim, gen.separation, seed)?,
        DataSource::Csv(path) => data::load_tabular_csv(path, label_col)?,
    })
}

fn gan_config(objective: mimgan_core::ObjectiveKind, dim: usize, m: &ModelArgs, seed: u64) -> GanConfig {
    let opt = match m.optimizer.unwrap_or(OptimizerArg::Adam) {
        OptimizerArg::Sgd => OptimizerConfig::sgd(m.lr),
        OptimizerArg::Adam => OptimizerConfig::adam(m.lr),
    };
    let mut cfg = GanConfig::new(objective, dim)
        .with_latent_dim(m.latent_dim)
        .with_hidden(&m.hidden, &m.hidden)
        .with_seed(seed)
        .with_batch_size(m.batch);
    cfg.gen_optimizer = opt;
    cfg.disc_optimizer = opt;
    cfg.d_steps_per_g_step = m.d_steps;
    cfg
}

fn synth(a: &SynthArgs, seed: u64, out: &Path) -> Result<Vec<String>> {
    if let DataSource::Csv(_) = a.data {
        bail!(UsageError("synth generates data; use --data gauss or --data synth".into()));
    }
    let ds = load_source(&a.data, &a.gen, None, seed)?;
    ds.save_csv(&out.join("data.csv"))?;
    Ok(vec!["data.csv".into()])
}

#[derive(Serialize)]
struct TrainSummary {
    objective: String,
    train_rows: usize,
    test_rows: usize,
    iterations: usize,
    normalized: bool,
    final_g_objective: Option<f64>,
    /// Per-feature statistics of generated rows, in training units.
    generated_mean: Vec<f64>,
    generated_std: Vec<f64>,
}

fn column_stats(m: &mimgan_core::DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    (0..m.cols())
        .map(|c| {
            let col = m.column(c);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, var.sqrt())
        })
        .unzip()
}

fn train(a: &TrainArgs, seed: u64, out: &Path) -> Result<Vec<String>> {
    let ds = load_source(&a.data, &a.gen, a.label_col.as_deref(), seed)?;
    let mut outputs = Vec::new();
    let (train_set, test_set) = if ds.labels().is_some() {
        let (tr, te) = data::split_train_test(&ds, a.train_fraction, SplitMode::NormalOnlyTrain, seed)?;
        te.save_csv(&out.join("test.csv"))?;
        outputs.push("test.csv".to_string());
        (tr, Some(te))
    } else {
        (ds, None)
    };
    // The Gaussian source stays in raw units; the generator's output scale
    // absorbs its range.
    let normalized = a.data != DataSource::Gauss;
    let features = if normalized {
        let stats = Normalization::fit(train_set.features())?;
        write_json(&out.join(NORMALIZATION_FILE), &stats)?;
        outputs.push(NORMALIZATION_FILE.into());
        stats.apply(train_set.features())?
    } else {
        train_set.features().clone()
    };

    let cfg = gan_config(a.objective, features.cols(), &a.model, seed).with_iterations(a.iters);
    let run = training::train_adversarial(&cfg, &features)?;
    run.generator.save(&out.join(GENERATOR_FILE))?;
    run.discriminator.save(&out.join(DISCRIMINATOR_FILE))?;
    run.log.save_csv(&out.join("training_log.csv"))?;
    let (generated_mean, generated_std) = column_stats(&training::sample(&run.generator, SUMMARY_SAMPLES, seed)?);
    write_json(
        &out.join("summary.json"),
        &TrainSummary {
            objective: a.objective.to_string(),
            train_rows: features.rows(),
            test_rows: test_set.as_ref().map_or(0, TabularDataset::len),
            iterations: a.iters,
            normalized,
            final_g_objective: run.log.records.last().map(|r| r.g_objective),
            generated_mean,
            generated_std,
        },
    )?;
    outputs.extend([GENERATOR_FILE, DISCRIMINATOR_FILE, "training_log.csv", "summary.json"].map(String::from));
    Ok(outputs)
}

#[derive(Serialize)]
struct CurveSummary {
    objective: String,
    d_pretrain: usize,
    file: String,
    window: usize,
    trailing_variance: Option<f64>,
    final_g_objective: Option<f64>,
}

fn curves(a: &CurvesArgs, seed: u64, out: &Path) -> Result<Vec<String>> {
    let ds = load_source(&a.data, &a.gen, None, seed)?;
    let features = if a.data == DataSource::Gauss {
        ds.features().clone()
    } else {
        Normalization::fit(ds.features())?.apply(ds.features())?
    };
    let window = CURVE_WINDOW.min(a.g_iters);
    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    for &kind in &a.objectives {
        for &n in &a.d_pretrain {
            let mut cfg = gan_config(kind, features.cols(), &a.model, seed);
            cfg.curve_samples = a.curve_samples;
            let run = training::train_generator_fixed_discriminator(&cfg, &features, n, a.g_iters)?;
            let file = format!("curve_{kind}_{n}.csv");
            run.curve.save_csv(&out.join(&file))?;
            let values = run.curve.g_objectives();
            summary.push(CurveSummary {
                objective: kind.to_string(),
                d_pretrain: n,
                file: file.clone(),
                window,
                trailing_variance: training::trailing_variance(&values, window),
                final_g_objective: values.last().copied(),
            });
            outputs.push(file);
        }
    }
    write_json(&out.join("curves_summary.json"), &summary)?;
    outputs.push("curves_summary.json".into());
    Ok(outputs)
}

fn analyze(a: &AnalyzeArgs, out: &Path) -> Result<Vec<String>> {
    let (header, rows) = tables::build(a)?;
    let text = tables::to_csv(&header, &rows);
    print!("{text}");
    let file = format!("{}.csv", a.table.name());
    fs::write(out.join(&file), text).with_context(|| format!("writing {file}"))?;
    Ok(vec![file])
}

fn detect(a: &DetectArgs, seed: u64, out: &Path) -> Result<Vec<String>> {
    let generator = MlpModel::load(&a.models.join(GENERATOR_FILE))?;
    let discriminator = MlpModel::load(&a.models.join(DISCRIMINATOR_FILE))?;
    let ds = data::load_tabular_csv(&a.input, a.label_col.as_deref())?;
    if a.gamma_threshold == Threshold::Auto && ds.labels().is_none() {
        bail!(UsageError("--gamma-threshold auto needs --label-col".into()));
    }
    let stats_path = a.models.join(NORMALIZATION_FILE);
    let features = if stats_path.exists() {
        let text = fs::read_to_string(&stats_path).with_context(|| format!("reading {}", stats_path.display()))?;
        let stats: Normalization = serde_json::from_str(&text)?;
        stats.apply(ds.features())?
    } else {
        ds.features().clone()
    };
    if features.cols() != generator.output_dim() {
        bail!(UsageError(format!(
            "input has {} features, the models were trained on {}",
            features.cols(),
            generator.output_dim()
        )));
    }
    let cfg = AnomalyConfig {
        lambda: a.lambda,
        eta: a.eta,
        p_norm: a.p_norm,
        learning_rate: a.inv_lr,
        iterations: a.inv_iters,
        threshold: a.gamma_threshold,
        ..AnomalyConfig::default()
    };
    cfg.validate()?;
    let scored = anomaly::score_samples(&features, ds.labels(), &generator, &discriminator, &cfg, seed)?;
    let (gamma, classified) = anomaly::apply_threshold(&scored, cfg.threshold)?;
    anomaly::save_scores_csv(&classified, &out.join("scores.csv"))?;
    write_json(&out.join("score_summary.json"), &anomaly::ScoreSummary::new(&classified, gamma, &cfg))?;
    Ok(vec!["scores.csv".into(), "score_summary.json".into()])
}

#[derive(Serialize)]
struct EvalMetrics {
    samples: usize,
    anomalies: usize,
    auc: f64,
    f1: f64,
    precision: f64,
    recall: f64,
    /// Threshold applied here; absent when the report's decisions were used.
    threshold: Option<f64>,
}

fn eval(a: &EvalArgs, out: &Path) -> Result<Vec<String>> {
    let samples = anomaly::load_scores_csv(&a.scores)?;
    let Some(labels) = samples.iter().map(|s| s.truth).collect::<Option<Vec<u8>>>() else {
        bail!(UsageError("every row of the score report needs a truth label".into()));
    };
    let (threshold, samples) = match a.gamma_threshold {
        Some(t) => {
            let (gamma, classified) = anomaly::apply_threshold(&samples, t)?;
            (Some(gamma), classified)
        }
        None => (None, samples),
    };
    let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let decisions: Vec<u8> = samples.iter().map(|s| s.decision).collect();
    let roc = roc_auc(&scores, &labels)?;
    roc.save_csv(&out.join("roc.csv"))?;
    let confusion = Confusion::from_decisions(&decisions, &labels)?;
    write_json(
        &out.join("metrics.json"),
        &EvalMetrics {
            samples: samples.len(),
            anomalies: labels.iter().filter(|&&l| l == 1).count(),
            auc: roc.auc,
            f1: confusion.f1(),
            precision: confusion.precision(),
            recall: confusion.recall(),
            threshold,
        },
    )?;
    println!("auc {}  f1 {}", roc.auc, confusion.f1());
    Ok(vec!["roc.csv".into(), "metrics.json".into()])
}
