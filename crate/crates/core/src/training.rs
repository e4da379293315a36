//! Adversarial training loops and the fixed-discriminator curve experiment.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::nn::{mlp_specs, Activation, LayerSpec, MlpModel, OutputScale};
use crate::objectives::{
    discriminator_loss, discriminator_loss_on, generator_loss_on, generator_objective, ObjectiveKind,
};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::rng::{self, streams, StreamRng};
use crate::tensor::DenseMatrix;

const MODULE: &str = "training";

/// Everything that determines a training run besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub objective: ObjectiveKind,
    pub latent_dim: usize,
    pub gen_layers: Vec<LayerSpec>,
    pub disc_layers: Vec<LayerSpec>,
    pub gen_optimizer: OptimizerConfig,
    pub disc_optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub iterations: usize,
    pub d_steps_per_g_step: usize,
    pub seed: u64,
    /// Critic weight bound, used by the Wasserstein objective only.
    pub w_clip: f64,
    /// Rows of real data and latent draws per step of the fixed-discriminator
    /// curve experiment.
    pub curve_samples: usize,
}

pub const DEFAULT_LATENT_DIM: usize = 8;
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

fn disc_head(objective: ObjectiveKind) -> Activation {
    if objective.bounded_discriminator() {
        Activation::Sigmoid
    } else {
        Activation::Identity
    }
}

impl GanConfig {
    /// Defaults for data of dimension `data_dim`: two hidden layers of 64,
    /// Adam at 0.001 for both players, batch 256, 2000 iterations.
    pub fn new(objective: ObjectiveKind, data_dim: usize) -> Self {
        GanConfig {
            objective,
            latent_dim: DEFAULT_LATENT_DIM,
            gen_layers: mlp_specs(DEFAULT_LATENT_DIM, &DEFAULT_HIDDEN, data_dim, Activation::Tanh),
            disc_layers: mlp_specs(data_dim, &DEFAULT_HIDDEN, 1, disc_head(objective)),
            gen_optimizer: OptimizerConfig::adam(0.001),
            disc_optimizer: OptimizerConfig::adam(0.001),
            batch_size: 256,
            iterations: 2000,
            d_steps_per_g_step: 1,
            seed: 0,
            w_clip: 0.01,
            curve_samples: 16_000,
        }
    }

    pub fn data_dim(&self) -> usize {
        self.disc_layers.first().map_or(0, |l| l.fan_in)
    }

    /// Rebuilds both networks with the given hidden widths.
    pub fn with_hidden(mut self, gen_hidden: &[usize], disc_hidden: &[usize]) -> Self {
        let d = self.data_dim();
        self.gen_layers = mlp_specs(self.latent_dim, gen_hidden, d, Activation::Tanh);
        self.disc_layers = mlp_specs(d, disc_hidden, 1, disc_head(self.objective));
        self
    }

    /// Changes the latent width, keeping the generator's hidden layers.
    pub fn with_latent_dim(mut self, latent_dim: usize) -> Self {
        self.latent_dim = latent_dim;
        if let Some(first) = self.gen_layers.first_mut() {
            first.fan_in = latent_dim;
        }
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn validate(&self, data_dim: usize) -> Result<()> {
        let bad = |detail: String| Err(Error::invalid(MODULE, detail));
        if self.latent_dim == 0 || self.batch_size == 0 || self.d_steps_per_g_step == 0 || self.curve_samples == 0 {
            return bad("latent_dim, batch_size, d_steps_per_g_step and curve_samples must be positive".into());
        }
        let (Some(g0), Some(gl)) = (self.gen_layers.first(), self.gen_layers.last()) else {
            return bad("generator has no layers".into());
        };
        let (Some(d0), Some(dl)) = (self.disc_layers.first(), self.disc_layers.last()) else {
            return bad("discriminator has no layers".into());
        };
        if g0.fan_in != self.latent_dim {
            return bad(format!("generator input {} != latent_dim {}", g0.fan_in, self.latent_dim));
        }
        if gl.fan_out != data_dim || d0.fan_in != data_dim {
            return bad(format!(
                "generator output {} and discriminator input {} must equal data dimension {data_dim}",
                gl.fan_out, d0.fan_in
            ));
        }
        if dl.fan_out != 1 {
            return bad(format!("discriminator output must be 1-dimensional, got {}", dl.fan_out));
        }
        if self.objective.bounded_discriminator() && dl.activation != Activation::Sigmoid {
            return bad(format!("objective {} needs a sigmoid discriminator head", self.objective));
        }
        if self.objective == ObjectiveKind::Wasserstein && !(self.w_clip > 0.0 && self.w_clip.is_finite()) {
            return bad(format!("w_clip must be positive, got {}", self.w_clip));
        }
        for (who, o) in [("generator", self.gen_optimizer), ("discriminator", self.disc_optimizer)] {
            if !(o.learning_rate > 0.0 && o.learning_rate.is_finite()) {
                return bad(format!("{who} learning rate must be positive, got {}", o.learning_rate));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Game value as seen by the generator; see
    /// [`generator_objective`](crate::objectives::generator_objective).
    pub g_objective: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
}

impl TrainingLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn g_objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.g_objective).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iteration", "d_loss", "g_loss", "g_objective"])?;
        for r in &self.records {
            out.write_record([
                r.iteration.to_string(),
                r.d_loss.to_string(),
                r.g_loss.to_string(),
                r.g_objective.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<log>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Trained networks together with the per-iteration log.
#[derive(Clone, Debug)]
pub struct GanRun {
    pub generator: MlpModel,
    pub discriminator: MlpModel,
    pub log: TrainingLog,
}

/// Networks as they stand before the first update.
///
/// The generator's tanh output is stretched onto the per-feature range of
/// `data`, so targets outside (−1, 1) are reachable.
pub fn initial_models(cfg: &GanConfig, data: &DenseMatrix) -> Result<(MlpModel, MlpModel)> {
    if data.rows() == 0 {
        return Err(Error::invalid(MODULE, "training data is empty"));
    }
    data.check_finite("training data")?;
    cfg.validate(data.cols())?;
    let g = MlpModel::new(&cfg.gen_layers, &mut rng::stream(cfg.seed, streams::GENERATOR_INIT))?
        .with_output_scale(OutputScale::from_data_range(data)?)?;
    let d = MlpModel::new(&cfg.disc_layers, &mut rng::stream(cfg.seed, streams::DISCRIMINATOR_INIT))?;
    Ok((g, d))
}

fn random_rows(data: &DenseMatrix, n: usize, r: &mut StreamRng) -> DenseMatrix {
    let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..data.rows())).collect();
    data.select_rows(&idx)
}

/// Reclassifies numeric failures inside a step as divergence of the run.
fn diverged<T>(what: &'static str, iteration: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite { .. } | Error::Domain { .. } => Error::Diverged { what, iteration },
        other => other,
    })
}

struct Players {
    kind: ObjectiveKind,
    g: MlpModel,
    d: MlpModel,
    g_opt: Optimizer,
    d_opt: Optimizer,
}

impl Players {
    /// One descent step on the discriminator loss; returns the loss.
    fn d_step(&mut self, real: &DenseMatrix, z: &DenseMatrix, w_clip: f64) -> Result<f64> {
        let fake = self.g.forward(z)?;
        let n_real = real.rows();
        let batch = real.vstack(&fake)?;
        let mut tape = Tape::new();
        let x = tape.leaf(batch)?;
        let (out, vars) = self.d.forward_taped(&mut tape, x)?;
        let d_real = tape.slice_rows(out, 0, n_real)?;
        let d_fake = tape.slice_rows(out, n_real, n_real + fake.rows())?;
        let loss = discriminator_loss_on(&mut tape, self.kind, d_real, d_fake)?;
        let grads = tape.backward(loss, 1.0)?;
        let grads = self.d.collect_gradients(&grads, &vars);
        self.d_opt.step(self.d.params_mut(), &grads)?;
        if self.kind == ObjectiveKind::Wasserstein {
            self.d.clip_parameters(w_clip);
        }
        Ok(tape.scalar(loss))
    }

    /// One descent step on the generator loss. Returns the loss and the
    /// discriminator outputs on the generated batch, both from before the update.
    fn g_step(&mut self, z: &DenseMatrix) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let zv = tape.leaf(z.clone())?;
        let (gz, gvars) = self.g.forward_taped(&mut tape, zv)?;
        let (dz, _) = self.d.forward_taped(&mut tape, gz)?;
        let loss = generator_loss_on(&mut tape, self.kind, dz)?;
        let grads = tape.backward(loss, 1.0)?;
        let grads = self.g.collect_gradients(&grads, &gvars);
        self.g_opt.step(self.g.params_mut(), &grads)?;
        Ok((tape.scalar(loss), tape.value(dz).as_slice().to_vec()))
    }
}

fn run_adversarial(cfg: &GanConfig, data: &DenseMatrix, players: &mut Players, log: &mut TrainingLog) -> Result<()> {
    let mut r = rng::stream(cfg.seed, streams::TRAINING);
    for it in 0..cfg.iterations {
        let mut d_loss = f64::NAN;
        let mut real = DenseMatrix::zeros(0, data.cols());
        for _ in 0..cfg.d_steps_per_g_step {
            real = random_rows(data, cfg.batch_size, &mut r);
            let z = rng::standard_normal_matrix(&mut r, cfg.batch_size, cfg.latent_dim);
            d_loss = diverged("discriminator loss", it, players.d_step(&real, &z, cfg.w_clip))?;
        }
        let z = rng::standard_normal_matrix(&mut r, cfg.batch_size, cfg.latent_dim);
        let d_real = diverged("discriminator output", it, players.d.forward(&real))?;
        let (g_loss, d_fake) = diverged("generator loss", it, players.g_step(&z))?;
        let g_objective = diverged(
            "generator objective",
            it,
            generator_objective(cfg.objective, d_real.as_slice(), &d_fake),
        )?;
        if !(d_loss.is_finite() && g_loss.is_finite() && g_objective.is_finite()) {
            return Err(Error::Diverged { what: "loss", iteration: it });
        }
        log.records.push(LogRecord {
            iteration: it,
            d_loss,
            g_loss,
            g_objective,
        });
    }
    Ok(())
}

/// Alternates `d_steps_per_g_step` discriminator steps with one generator
/// step for `cfg.iterations` iterations.
///
/// Real batches are drawn from the rows of `data` with replacement and latent
/// batches from a standard normal. Any non-finite loss aborts the run with
/// [`Error::Diverged`] naming the iteration.
pub fn train_adversarial(cfg: &GanConfig, data: &DenseMatrix) -> Result<GanRun> {
    let (g, d) = initial_models(cfg, data)?;
    let mut players = Players {
        kind: cfg.objective,
        g,
        d,
        g_opt: cfg.gen_optimizer.build(),
        d_opt: cfg.disc_optimizer.build(),
    };
    let mut log = TrainingLog::default();
    run_adversarial(cfg, data, &mut players, &mut log)?;
    Ok(GanRun {
        generator: players.g,
        discriminator: players.d,
        log,
    })
}

/// Result of [`train_generator_fixed_discriminator`].
#[derive(Clone, Debug)]
pub struct FixedDiscriminatorRun {
    /// Log of the ordinary adversarial phase.
    pub pretrain: TrainingLog,
    /// One record per generator-only step; `d_loss` is evaluated, not descended.
    pub curve: TrainingLog,
    pub generator: MlpModel,
    pub discriminator: MlpModel,
}

/// Trains both players for `d_pretrain_iters`, then freezes the
/// discriminator and trains the generator alone for `g_iters` steps.
///
/// Each generator-only step draws `cfg.curve_samples` fresh real rows and
/// latent vectors; the generator descends on those latents and the logged
/// objective is measured on the same draws before the update.
pub fn train_generator_fixed_discriminator(
    cfg: &GanConfig,
    data: &DenseMatrix,
    d_pretrain_iters: usize,
    g_iters: usize,
) -> Result<FixedDiscriminatorRun> {
    let phase1 = GanConfig {
        iterations: d_pretrain_iters,
        ..cfg.clone()
    };
    let GanRun {
        generator,
        discriminator,
        log: pretrain,
    } = train_adversarial(&phase1, data)?;
    let mut players = Players {
        kind: cfg.objective,
        g: generator,
        d: discriminator,
        g_opt: cfg.gen_optimizer.build(),
        d_opt: cfg.disc_optimizer.build(),
    };
    let mut r = rng::stream(cfg.seed, streams::CURVE);
    let mut curve = TrainingLog::default();
    for it in 0..g_iters {
        let real = random_rows(data, cfg.curve_samples, &mut r);
        let z = rng::standard_normal_matrix(&mut r, cfg.curve_samples, cfg.latent_dim);
        let d_real = diverged("discriminator output", it, players.d.forward(&real))?;
        let (g_loss, d_fake) = diverged("generator loss", it, players.g_step(&z))?;
        let d_loss = diverged(
            "discriminator loss",
            it,
            discriminator_loss(cfg.objective, d_real.as_slice(), &d_fake),
        )?;
        let g_objective = diverged(
            "generator objective",
            it,
            generator_objective(cfg.objective, d_real.as_slice(), &d_fake),
        )?;
        curve.records.push(LogRecord {
            iteration: it,
            d_loss,
            g_loss,
            g_objective,
        });
    }
    Ok(FixedDiscriminatorRun {
        pretrain,
        curve,
        generator: players.g,
        discriminator: players.d,
    })
}

/// `n` generated rows from latent draws seeded by `seed`.
pub fn sample(generator: &MlpModel, n: usize, seed: u64) -> Result<DenseMatrix> {
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, generator.output_dim()));
    }
    let mut r = rng::stream(seed, streams::SAMPLING);
    let z = rng::standard_normal_matrix(&mut r, n, generator.input_dim());
    generator.forward(&z)
}

/// Losses of a trained pair on held-out real rows and `real.rows()` fresh
/// generated rows. For MIM, `d_loss` is the game value
/// `E[exp(1−D(x))] + E[exp(D(G(z)))]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEstimate {
    pub d_loss: f64,
    pub g_objective: f64,
}

pub fn evaluate_objective(
    kind: ObjectiveKind,
    generator: &MlpModel,
    discriminator: &MlpModel,
    real: &DenseMatrix,
    seed: u64,
) -> Result<ObjectiveEstimate> {
    let fake = sample(generator, real.rows(), seed)?;
    let d_real = discriminator.forward(real)?;
    let d_fake = discriminator.forward(&fake)?;
    Ok(ObjectiveEstimate {
        d_loss: discriminator_loss(kind, d_real.as_slice(), d_fake.as_slice())?,
        g_objective: generator_objective(kind, d_real.as_slice(), d_fake.as_slice())?,
    })
}

/// Sample variance (n − 1 denominator) of the last `window` values.
pub fn trailing_variance(values: &[f64], window: usize) -> Option<f64> {
    if window < 2 || values.len() < window {
        return None;
    }
    let tail = &values[values.len() - window..];
    let mean = tail.iter().sum::<f64>() / window as f64;
    Some(tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (window - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample_gaussian;

    fn small(kind: ObjectiveKind) -> GanConfig {
        GanConfig::new(kind, 1)
            .with_hidden(&[16, 8], &[16, 8])
            .with_batch_size(64)
            .with_iterations(30)
            .with_seed(3)
    }

    fn gauss() -> DenseMatrix {
        sample_gaussian(4.0, 1.25, 2000, 1).unwrap().features().clone()
    }

    #[test]
    fn zero_iterations_returns_initial_models() {
        let cfg = small(ObjectiveKind::Mim).with_iterations(0);
        let data = gauss();
        let run = train_adversarial(&cfg, &data).unwrap();
        let (g, d) = initial_models(&cfg, &data).unwrap();
        assert_eq!(run.generator, g);
        assert_eq!(run.discriminator, d);
        assert!(run.log.is_empty());
    }

    #[test]
    fn same_seed_same_log_for_every_objective() {
        let data = gauss();
        for kind in ObjectiveKind::ALL {
            let cfg = small(kind);
            let a = train_adversarial(&cfg, &data).unwrap();
            let b = train_adversarial(&cfg, &data).unwrap();
            assert_eq!(a.log, b.log, "{kind}");
            assert_eq!(a.generator, b.generator);
            assert_eq!(a.log.len(), 30);
            for (i, r) in a.log.records.iter().enumerate() {
                assert_eq!(r.iteration, i);
                assert!(r.d_loss.is_finite() && r.g_loss.is_finite() && r.g_objective.is_finite());
            }
        }
    }

    #[test]
    fn wasserstein_critic_stays_clipped() {
        let cfg = small(ObjectiveKind::Wasserstein);
        let run = train_adversarial(&cfg, &gauss()).unwrap();
        for p in run.discriminator.params() {
            assert!(p.as_slice().iter().all(|v| v.abs() <= cfg.w_clip));
        }
    }

    #[test]
    fn config_invariants_are_checked() {
        let data = gauss();
        let mut cfg = small(ObjectiveKind::Mim);
        cfg.disc_layers = mlp_specs(1, &[4], 2, Activation::Sigmoid);
        assert!(train_adversarial(&cfg, &data).is_err());
        let mut cfg = small(ObjectiveKind::Mim);
        cfg.disc_layers = mlp_specs(1, &[4], 1, Activation::Identity);
        assert!(train_adversarial(&cfg, &data).is_err());
        let cfg = small(ObjectiveKind::Mim);
        assert!(train_adversarial(&cfg, &DenseMatrix::zeros(0, 1)).is_err());
        assert!(train_adversarial(&cfg, &DenseMatrix::zeros(5, 2)).is_err());
        let cfg = small(ObjectiveKind::Mim).with_latent_dim(3);
        assert!(train_adversarial(&cfg, &data).is_ok());
    }

    #[test]
    fn sampling_contract() {
        let cfg = small(ObjectiveKind::Mim);
        let (g, _) = initial_models(&cfg, &gauss()).unwrap();
        assert_eq!(sample(&g, 0, 1).unwrap().shape(), (0, 1));
        assert_eq!(sample(&g, 50, 9).unwrap(), sample(&g, 50, 9).unwrap());
        let mut raw = g.clone();
        raw.set_output_scale(None).unwrap();
        assert!(sample(&raw, 200, 2).unwrap().as_slice().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn curve_phase_lengths() {
        let mut cfg = small(ObjectiveKind::KlSaturating);
        cfg.curve_samples = 128;
        let data = gauss();
        let run = train_generator_fixed_discriminator(&cfg, &data, 20, 0).unwrap();
        assert!(run.curve.is_empty());
        assert_eq!(run.pretrain.len(), 20);
        let run2 = train_generator_fixed_discriminator(&cfg, &data, 20, 15).unwrap();
        assert_eq!(run2.curve.len(), 15);
        // The discriminator is frozen during the curve phase.
        assert_eq!(run.discriminator, run2.discriminator);
    }

    #[test]
    fn log_csv_header() {
        let log = TrainingLog {
            records: vec![LogRecord {
                iteration: 0,
                d_loss: 1.5,
                g_loss: -0.25,
                g_objective: 2.0,
            }],
        };
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,d_loss,g_loss,g_objective\n0,1.5,-0.25,2\n");
    }

    #[test]
    fn trailing_variance_basics() {
        assert_eq!(trailing_variance(&[1.0, 2.0, 3.0], 2), Some(0.5));
        assert_eq!(trailing_variance(&[1.0], 2), None);
    }
}
