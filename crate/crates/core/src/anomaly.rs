//! Anomaly scoring with a trained generator/discriminator pair.
//!
//! A test row `x` is mapped back to the latent space by descending
//! `J(x, z) = (1−λ)·‖x − G(z)‖_p + λ·H(D(G(z)), β)` over `z`, and scored as
//! `S = (1−η)·J(x, z_opt) + η·H(D(x), β)` with β = 1 by default. `H` is the
//! sigmoid cross-entropy applied to the discriminator's output value as is,
//! so a sigmoid head is squashed twice.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::metrics::Confusion;
use crate::nn::MlpModel;
use crate::optim::Optimizer;
use crate::rng;
use crate::tensor::DenseMatrix;

const MODULE: &str = "anomaly";

/// Rows inverted together. Adam acts per coordinate and the batch loss is a
/// plain sum, so chunking does not change any row's trajectory.
const INVERSION_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threshold {
    Fixed(f64),
    /// The cut maximising F1 on labelled scores.
    Auto,
}

impl std::str::FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Threshold::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Threshold::Fixed(v)),
            _ => Err(Error::invalid(MODULE, format!("threshold must be 'auto' or a number, got '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyConfig {
    pub lambda: f64,
    pub eta: f64,
    pub beta: f64,
    pub p_norm: u32,
    pub learning_rate: f64,
    pub iterations: usize,
    pub max_restarts: usize,
    pub threshold: Threshold,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        AnomalyConfig {
            lambda: 0.1,
            eta: 0.05,
            beta: 1.0,
            p_norm: 2,
            learning_rate: 0.003,
            iterations: 500,
            max_restarts: 3,
            threshold: Threshold::Auto,
        }
    }
}

impl AnomalyConfig {
    /// Checks `0 < λ < 1`, `0 < η < 1`, `p ≥ 1` and a positive step size.
    pub fn validate(&self) -> Result<()> {
        self.validate_weights(false)
    }

    /// Like [`validate`](Self::validate) but admits the limiting weights 0
    /// and 1, which reduce the score to one of its terms.
    pub fn validate_closed(&self) -> Result<()> {
        self.validate_weights(true)
    }

    fn validate_weights(&self, closed: bool) -> Result<()> {
        let inside = |v: f64| if closed { (0.0..=1.0).contains(&v) } else { v > 0.0 && v < 1.0 };
        if !inside(self.lambda) || !inside(self.eta) {
            return Err(Error::invalid(
                MODULE,
                format!("lambda and eta must lie in (0, 1), got {} and {}", self.lambda, self.eta),
            ));
        }
        if self.p_norm == 0 {
            return Err(Error::invalid(MODULE, "p_norm must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || !self.beta.is_finite() {
            return Err(Error::invalid(MODULE, "learning rate must be positive and beta finite"));
        }
        Ok(())
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `−β·ln σ(d) − (1−β)·ln(1−σ(d))`, evaluated as softplus terms so neither
/// logarithm sees 0.
pub fn sigmoid_cross_entropy(d: f64, beta: f64) -> f64 {
    beta * softplus(-d) + (1.0 - beta) * softplus(d)
}

fn check_pair(generator: &MlpModel, discriminator: &MlpModel) -> Result<()> {
    if generator.output_dim() != discriminator.input_dim() || discriminator.output_dim() != 1 {
        return Err(Error::shape(
            "anomaly",
            format!(
                "generator emits {} features, discriminator takes {} and emits {}",
                generator.output_dim(),
                discriminator.input_dim(),
                discriminator.output_dim()
            ),
        ));
    }
    Ok(())
}

fn row_matrix(v: &[f64], what: &str, expected: usize) -> Result<DenseMatrix> {
    if v.len() != expected {
        return Err(Error::shape("anomaly", format!("{what} has {} entries, expected {expected}", v.len())));
    }
    DenseMatrix::new(1, v.len(), v.to_vec())
}

/// `J(x, z)` for one sample.
pub fn reconstruction_loss(
    x: &[f64],
    z: &[f64],
    generator: &MlpModel,
    discriminator: &MlpModel,
    cfg: &AnomalyConfig,
) -> Result<f64> {
    check_pair(generator, discriminator)?;
    let gz = generator.forward(&row_matrix(z, "latent", generator.input_dim())?)?;
    let xm = row_matrix(x, "sample", generator.output_dim())?;
    let residual: Vec<f64> = xm.as_slice().iter().zip(gz.as_slice()).map(|(a, b)| a - b).collect();
    let norm = crate::autodiff::p_norm(&residual, cfg.p_norm as f64);
    let d = discriminator.forward(&gz)?.get(0, 0);
    Ok((1.0 - cfg.lambda) * norm + cfg.lambda * sigmoid_cross_entropy(d, cfg.beta))
}

/// `S = (1−η)·J(x, z_opt) + η·H(D(x), 1)`.
pub fn anomaly_score(
    x: &[f64],
    z_opt: &[f64],
    generator: &MlpModel,
    discriminator: &MlpModel,
    cfg: &AnomalyConfig,
) -> Result<f64> {
    let j = reconstruction_loss(x, z_opt, generator, discriminator, cfg)?;
    let dx = discriminator.forward(&row_matrix(x, "sample", discriminator.input_dim())?)?.get(0, 0);
    Ok(combine_score(j, dx, cfg))
}

fn combine_score(j: f64, dx: f64, cfg: &AnomalyConfig) -> f64 {
    (1.0 - cfg.eta) * j + cfg.eta * sigmoid_cross_entropy(dx, cfg.beta)
}

/// Per-row `J` for a batch, recorded on a fresh tape together with the
/// gradient of `Σ J` with respect to `z`.
fn batch_loss_and_grad(
    x: &DenseMatrix,
    z: &DenseMatrix,
    generator: &MlpModel,
    discriminator: &MlpModel,
    cfg: &AnomalyConfig,
) -> Result<(Vec<f64>, DenseMatrix)> {
    let mut tape = Tape::new();
    let zv = tape.leaf(z.clone())?;
    let xv = tape.leaf(x.clone())?;
    let (gz, _) = generator.forward_taped(&mut tape, zv)?;
    let diff = tape.sub(gz, xv)?;
    let norm = tape.row_norm(diff, cfg.p_norm as f64)?;
    let (dg, _) = discriminator.forward_taped(&mut tape, gz)?;
    // H(d, β) = β·ln(1 + e^{−d}) + (1−β)·ln(1 + e^{d}).
    let mut terms = vec![(norm, 1.0 - cfg.lambda)];
    for (sign, weight) in [(-1.0, cfg.beta), (1.0, 1.0 - cfg.beta)] {
        if weight != 0.0 {
            let signed = tape.scale_shift(dg, sign, 0.0)?;
            let e = tape.exp(signed)?;
            let one_plus = tape.scale_shift(e, 1.0, 1.0)?;
            terms.push((tape.log(one_plus)?, cfg.lambda * weight));
        }
    }
    let j = tape.affine(&terms, 0.0)?;
    let total = tape.sum(j)?;
    let grads = tape.backward(total, 1.0)?;
    Ok((tape.value(j).as_slice().to_vec(), grads.wrt(zv)))
}

/// Outcome of latent inversion for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub z: Vec<f64>,
    /// `J(x, z)` at the returned `z`, the lowest value seen.
    pub loss: f64,
    pub restarts: usize,
}

/// Adam descent on `z` from the given starting rows. Every row keeps the
/// best `z` it has visited; the initial point counts as visited.
///
/// A non-finite value stops the descent early; the best points found up to
/// then are returned alongside the error.
fn descend(
    x: &DenseMatrix,
    z0: DenseMatrix,
    generator: &MlpModel,
    discriminator: &MlpModel,
    cfg: &AnomalyConfig,
) -> (DenseMatrix, Vec<f64>, Result<()>) {
    let mut z = z0;
    let mut best_z = z.clone();
    let mut best = vec![f64::INFINITY; x.rows()];
    let mut opt = Optimizer::adam(cfg.learning_rate);
    let cols = z.cols();
    for it in 0..=cfg.iterations {
        let (losses, grad) = match batch_loss_and_grad(x, &z, generator, discriminator, cfg) {
            Ok(v) => v,
            Err(e) => return (best_z, best, Err(e)),
        };
        for (r, &l) in losses.iter().enumerate() {
            if l < best[r] {
                best[r] = l;
                best_z.as_mut_slice()[r * cols..(r + 1) * cols].copy_from_slice(z.row(r));
            }
        }
        if it == cfg.iterations {
            break;
        }
        if let Err(e) = opt.step(vec![&mut z], &[grad]) {
            return (best_z, best, Err(e));
        }
    }
    (best_z, best, Ok(()))
}

fn recoverable(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. } | Error::Domain { .. })
}

fn invert_one(
    x: &[f64],
    index: usize,
    generator: &MlpModel,
    discriminator: &MlpModel,
    cfg: &AnomalyConfig,
    seed: u64,
) -> Result<Inversion> {
    let xm = row_matrix(x, "sample", generator.output_dim())?;
    let mut r = rng::sample_stream(seed, index);
    let mut best: Option<Inversion> = None;
    for attempt in 0..=cfg.max_restarts {
        let z0 = rng::standard_normal_matrix(&mut r, 1, generator.input_dim());
        let (z, loss, status) = descend(&xm, z0, generator, discriminator, cfg);
        if loss[0].is_finite() && best.as_ref().is_none_or(|b| loss[0] < b.loss) {
            best = Some(Inversion {
                z: z.into_vec(),
                loss: loss[0],
                restarts: attempt,
            });
        }
        match status {
            Ok(()) => break,
            Err(e) if recoverable(&e) => continue,
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| Error::non_finite(MODULE, format!("latent inversion of sample {index}")))
}

/// Finds `z_opt = argmin_z J(x, z)` for sample `index` of a run seeded by
/// `seed`.
///
/// Starts from a standard-normal draw of the sample's own random stream and
/// runs `cfg.iterations` Adam steps, returning the best `z` seen. A descent
/// that hits a non-finite value is restarted from a new draw, at most
/// `cfg.max_restarts` times.
pub fn invert_latent(
    x: &[f64],
    index: usize,
    generator: &MlpModel,
    discriminator: &MlpModel,
    cfg: &AnomalyConfig,
    seed: u64,
) -> Result<Inversion> {
    check_pair(generator, discriminator)?;
    invert_one(x, index, generator, discriminator, cfg, seed)
}

/// [`invert_latent`] for every row of `x`, with row `i` using index `i`.
/// Results are identical to inverting the rows one at a time.
pub fn invert_batch(
    x: &DenseMatrix,
    generator: &MlpModel,
    discriminator: &MlpModel,
    cfg: &AnomalyConfig,
    seed: u64,
) -> Result<Vec<Inversion>> {
    check_pair(generator, discriminator)?;
    if x.cols() != generator.output_dim() {
        return Err(Error::shape(
            "anomaly",
            format!("samples have {} features, generator emits {}", x.cols(), generator.output_dim()),
        ));
    }
    let mut out = Vec::with_capacity(x.rows());
    let mut start = 0;
    while start < x.rows() {
        let end = (start + INVERSION_CHUNK).min(x.rows());
        let xs = x.slice_rows(start, end)?;
        let mut z0 = Vec::with_capacity((end - start) * generator.input_dim());
        for i in start..end {
            let mut r = rng::sample_stream(seed, i);
            z0.extend(rng::standard_normal_matrix(&mut r, 1, generator.input_dim()).into_vec());
        }
        let z0 = DenseMatrix::new(end - start, generator.input_dim(), z0)?;
        let (z, losses, status) = descend(&xs, z0, generator, discriminator, cfg);
        match status {
            Ok(()) => {
                for (k, loss) in losses.into_iter().enumerate() {
                    out.push(Inversion {
                        z: z.row(k).to_vec(),
                        loss,
                        restarts: 0,
                    });
                }
            }
            // One bad row spoils the whole chunk; redo its rows one by one.
            Err(e) if recoverable(&e) => {
                for i in start..end {
                    out.push(invert_one(x.row(i), i, generator, discriminator, cfg, seed)?);
                }
            }
            Err(e) => return Err(e),
        }
        start = end;
    }
    Ok(out)
}

/// A scored test sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub id: usize,
    pub score: f64,
    /// 1 when `score > Γ`.
    pub decision: u8,
    pub truth: Option<u8>,
}

/// Inverts and scores every row of `x`; decisions are left at 0 until
/// [`classify`] runs.
pub fn score_samples(
    x: &DenseMatrix,
    labels: Option<&[u8]>,
    generator: &MlpModel,
    discriminator: &MlpModel,
    cfg: &AnomalyConfig,
    seed: u64,
) -> Result<Vec<ScoredSample>> {
    cfg.validate_closed()?;
    if let Some(l) = labels {
        if l.len() != x.rows() {
            return Err(Error::invalid(MODULE, format!("{} labels for {} samples", l.len(), x.rows())));
        }
    }
    let inversions = invert_batch(x, generator, discriminator, cfg, seed)?;
    let dx = if x.rows() == 0 {
        DenseMatrix::zeros(0, 1)
    } else {
        discriminator.forward(x)?
    };
    Ok(inversions
        .iter()
        .enumerate()
        .map(|(i, inv)| ScoredSample {
            id: i,
            score: combine_score(inv.loss, dx.get(i, 0), cfg),
            decision: 0,
            truth: labels.map(|l| l[i]),
        })
        .collect())
}

/// Threshold whose strict cut `score > Γ` maximises F1 against the labels.
///
/// Candidates are every distinct score plus one value below the minimum
/// (everything flagged); ties go to the highest candidate.
pub fn auto_threshold(samples: &[ScoredSample]) -> Result<f64> {
    let labels: Vec<u8> = samples
        .iter()
        .map(|s| s.truth)
        .collect::<Option<_>>()
        .ok_or_else(|| Error::invalid(MODULE, "automatic threshold needs ground-truth labels"))?;
    if samples.is_empty() {
        return Err(Error::invalid(MODULE, "automatic threshold needs at least one sample"));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[b].score.total_cmp(&samples[a].score));
    let total_pos = labels.iter().filter(|&&l| l == 1).count();

    // Walk thresholds from the highest score downwards. At candidate
    // Γ = score, only strictly greater scores are flagged.
    let f1 = |tp: usize, fp: usize| Confusion {
        tp,
        fp,
        tn: 0,
        fn_: total_pos - tp,
    }
    .f1();
    let (mut tp, mut fp) = (0, 0);
    let mut best = (f1(0, 0), samples[order[0]].score);
    let mut i = 0;
    while i < order.len() {
        let s = samples[order[i]].score;
        while i < order.len() && samples[order[i]].score == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let next = if i < order.len() {
            samples[order[i]].score
        } else {
            s - 1.0
        };
        let f = f1(tp, fp);
        if f > best.0 {
            best = (f, next);
        }
    }
    Ok(best.1)
}

/// Sets `decision = 1` exactly when `score > gamma`.
pub fn classify(samples: &[ScoredSample], gamma: f64) -> Vec<ScoredSample> {
    samples
        .iter()
        .map(|s| ScoredSample {
            decision: u8::from(s.score > gamma),
            ..s.clone()
        })
        .collect()
}

/// Resolves `threshold` against `samples` and classifies them.
pub fn apply_threshold(samples: &[ScoredSample], threshold: Threshold) -> Result<(f64, Vec<ScoredSample>)> {
    let gamma = match threshold {
        Threshold::Fixed(g) => g,
        Threshold::Auto if samples.is_empty() => return Ok((f64::INFINITY, Vec::new())),
        Threshold::Auto => auto_threshold(samples)?,
    };
    if samples.iter().any(|s| !s.score.is_finite()) {
        return Err(Error::non_finite(MODULE, "anomaly scores"));
    }
    Ok((gamma, classify(samples, gamma)))
}

/// Aggregate view of a classified score list, written next to the CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub threshold: f64,
    pub threshold_mode: String,
    pub samples: usize,
    pub flagged: usize,
    pub labelled_anomalies: Option<usize>,
    pub config: AnomalyConfig,
}

impl ScoreSummary {
    pub fn new(samples: &[ScoredSample], threshold: f64, cfg: &AnomalyConfig) -> Self {
        let labelled = samples
            .iter()
            .map(|s| s.truth)
            .collect::<Option<Vec<u8>>>()
            .map(|l| l.iter().filter(|&&v| v == 1).count());
        ScoreSummary {
            threshold,
            threshold_mode: match cfg.threshold {
                Threshold::Auto => "auto".into(),
                Threshold::Fixed(_) => "fixed".into(),
            },
            samples: samples.len(),
            flagged: samples.iter().filter(|s| s.decision == 1).count(),
            labelled_anomalies: labelled,
            config: *cfg,
        }
    }
}

/// Writes `id,score,decision,truth`; unknown truth is an empty cell.
pub fn write_scores_csv<W: Write>(samples: &[ScoredSample], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["id", "score", "decision", "truth"])?;
    for s in samples {
        out.write_record([
            s.id.to_string(),
            s.score.to_string(),
            s.decision.to_string(),
            s.truth.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<scores>", e))?;
    Ok(())
}

pub fn save_scores_csv(samples: &[ScoredSample], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_scores_csv(samples, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_scores_csv(path: &Path) -> Result<Vec<ScoredSample>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != ["id", "score", "decision", "truth"] {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("expected header id,score,decision,truth, found {}", header.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let cell = |c: usize| rec.get(c).unwrap_or("").trim().to_string();
        let bad = |c: usize| Error::MalformedCell {
            path: path.to_path_buf(),
            row,
            column: header[c].clone(),
            cell: cell(c),
        };
        let id = cell(0).parse().map_err(|_| bad(0))?;
        let score: f64 = cell(1).parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| bad(1))?;
        let decision = match cell(2).as_str() {
            "0" => 0,
            "1" => 1,
            _ => return Err(bad(2)),
        };
        let truth = match cell(3).as_str() {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            _ => return Err(bad(3)),
        };
        out.push(ScoredSample {
            id,
            score,
            decision,
            truth,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer, LayerSpec};
    use proptest::prelude::*;

    fn layer(fan_in: usize, fan_out: usize, act: Activation, w: DenseMatrix) -> Layer {
        Layer {
            spec: LayerSpec::new(fan_in, fan_out, act),
            weight: w,
            bias: DenseMatrix::zeros(1, fan_out),
        }
    }

    /// `G(z) = z` on 2 dimensions and a discriminator that always outputs 0.
    fn identity_pair() -> (MlpModel, MlpModel) {
        let g = MlpModel::from_layers(vec![layer(2, 2, Activation::Identity, DenseMatrix::identity(2))]).unwrap();
        let d = MlpModel::from_layers(vec![layer(2, 1, Activation::Identity, DenseMatrix::zeros(2, 1))]).unwrap();
        (g, d)
    }

    #[test]
    fn cross_entropy_values() {
        assert!((sigmoid_cross_entropy(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((sigmoid_cross_entropy(0.5, 1.0) - 0.474_077).abs() < 1e-6);
        assert!((sigmoid_cross_entropy(0.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(sigmoid_cross_entropy(800.0, 0.0).is_finite());
        assert!(sigmoid_cross_entropy(-800.0, 1.0).is_finite());
    }

    #[test]
    fn reconstruction_loss_cases() {
        let (g, d) = identity_pair();
        let cfg = AnomalyConfig::default();
        let exact = reconstruction_loss(&[1.0, 2.0], &[1.0, 2.0], &g, &d, &cfg).unwrap();
        assert!((exact - 0.1 * std::f64::consts::LN_2).abs() < 1e-12);
        let half = AnomalyConfig { lambda: 0.5, ..cfg };
        let v = reconstruction_loss(&[3.0, 4.0], &[0.0, 0.0], &g, &d, &half).unwrap();
        assert!((v - 2.846_574).abs() < 1e-6);
        let pure = AnomalyConfig { lambda: 0.0, ..cfg };
        assert!((reconstruction_loss(&[3.0, 4.0], &[0.0, 0.0], &g, &d, &pure).unwrap() - 5.0).abs() < 1e-12);
        assert!(reconstruction_loss(&[3.0], &[0.0, 0.0], &g, &d, &cfg).is_err());
    }

    #[test]
    fn score_weights() {
        let (g, d) = identity_pair();
        let cfg0 = AnomalyConfig { eta: 0.0, ..Default::default() };
        let x = [0.5, -1.0];
        let z = [0.0, 0.3];
        let j = reconstruction_loss(&x, &z, &g, &d, &cfg0).unwrap();
        assert_eq!(anomaly_score(&x, &z, &g, &d, &cfg0).unwrap(), j);
        let cfg1 = AnomalyConfig { eta: 1.0, ..Default::default() };
        assert!((anomaly_score(&x, &z, &g, &d, &cfg1).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let cfg = AnomalyConfig::default();
        assert!((combine_score(2.0, 0.0, &cfg) - 1.934_657).abs() < 1e-6);
    }

    #[test]
    fn inversion_recovers_identity_target() {
        let (g, d) = identity_pair();
        let cfg = AnomalyConfig {
            lambda: 1e-9,
            learning_rate: 0.05,
            ..Default::default()
        };
        let inv = invert_latent(&[1.0, 2.0], 0, &g, &d, &cfg, 5).unwrap();
        let err = ((inv.z[0] - 1.0).powi(2) + (inv.z[1] - 2.0).powi(2)).sqrt();
        assert!(err < 1e-2, "{:?}", inv.z);
    }

    #[test]
    fn inversion_with_default_rate_is_monotone_and_best_seen() {
        let (g, d) = identity_pair();
        let cfg = AnomalyConfig::default();
        let x = [1.0, 2.0];
        let zero = AnomalyConfig { iterations: 0, ..cfg };
        let init = invert_latent(&x, 3, &g, &d, &zero, 5).unwrap();
        let mut r = rng::sample_stream(5, 3);
        assert_eq!(init.z, rng::standard_normal_matrix(&mut r, 1, 2).into_vec());
        let run = invert_latent(&x, 3, &g, &d, &cfg, 5).unwrap();
        assert!(run.loss <= init.loss);
        let recomputed = reconstruction_loss(&x, &run.z, &g, &d, &cfg).unwrap();
        assert!((recomputed - run.loss).abs() < 1e-12);
    }

    #[test]
    fn batch_matches_single_rows() {
        let (g, d) = identity_pair();
        let cfg = AnomalyConfig {
            iterations: 40,
            ..Default::default()
        };
        let x = DenseMatrix::from_rows(&[[0.1, 0.2], [3.0, -1.0], [0.0, 0.0]]).unwrap();
        let batch = invert_batch(&x, &g, &d, &cfg, 7).unwrap();
        for (i, inv) in batch.iter().enumerate() {
            assert_eq!(inv, &invert_latent(x.row(i), i, &g, &d, &cfg, 7).unwrap());
        }
    }

    fn scored(scores: &[f64], truth: &[u8]) -> Vec<ScoredSample> {
        scores
            .iter()
            .zip(truth)
            .enumerate()
            .map(|(id, (&score, &t))| ScoredSample {
                id,
                score,
                decision: 0,
                truth: Some(t),
            })
            .collect()
    }

    #[test]
    fn strict_threshold() {
        let s = scored(&[0.1, 0.9, 0.5], &[0, 1, 0]);
        let out = classify(&s, 0.5);
        assert_eq!(out.iter().map(|s| s.decision).collect::<Vec<_>>(), vec![0, 1, 0]);
        assert!(classify(&[], 0.5).is_empty());
        assert_eq!(classify(&out, 0.5), out);
    }

    #[test]
    fn auto_threshold_needs_labels() {
        let mut s = scored(&[0.1, 0.9], &[0, 1]);
        s[0].truth = None;
        assert!(auto_threshold(&s).is_err());
        assert!(apply_threshold(&s, Threshold::Auto).is_err());
    }

    #[test]
    fn auto_threshold_separates_clean_split() {
        let s = scored(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]);
        let (gamma, out) = apply_threshold(&s, Threshold::Auto).unwrap();
        assert_eq!(gamma, 0.2);
        assert_eq!(out.iter().map(|s| s.decision).collect::<Vec<_>>(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn scores_csv_round_trip() {
        let mut s = classify(&scored(&[0.25, 1.0 / 3.0], &[0, 1]), 0.3);
        s[0].truth = None;
        let f = tempfile::NamedTempFile::new().unwrap();
        save_scores_csv(&s, f.path()).unwrap();
        assert_eq!(load_scores_csv(f.path()).unwrap(), s);
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert!(text.starts_with("id,score,decision,truth\n0,0.25,0,\n"));
    }

    fn labelled_set() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (1usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec((0u8..8).prop_map(|k| f64::from(k) / 4.0), n),
                prop::collection::vec(0u8..2, n),
            )
        })
    }

    proptest! {
        #[test]
        fn auto_threshold_is_f1_optimal((scores, truth) in labelled_set()) {
            prop_assume!(truth.contains(&1));
            let s = scored(&scores, &truth);
            let (gamma, out) = apply_threshold(&s, Threshold::Auto).unwrap();
            let decisions: Vec<u8> = out.iter().map(|s| s.decision).collect();
            let best = crate::metrics::f1_score(&decisions, &truth).unwrap();
            let mut cuts = scores.clone();
            cuts.push(scores.iter().copied().fold(f64::INFINITY, f64::min) - 1.0);
            for c in cuts {
                let other: Vec<u8> = scores.iter().map(|&v| u8::from(v > c)).collect();
                prop_assert!(best >= crate::metrics::f1_score(&other, &truth).unwrap());
            }
            prop_assert!(scores.iter().zip(&decisions).all(|(&v, &d)| (d == 1) == (v > gamma)));
        }

        #[test]
        fn score_increases_with_each_term(j in 0.0f64..10.0, dj in 1e-6f64..1.0, d in -3.0f64..3.0, dd in 1e-3f64..1.0) {
            let cfg = AnomalyConfig::default();
            prop_assert!(combine_score(j + dj, d, &cfg) > combine_score(j, d, &cfg));
            // H(d, 1) falls as d rises, so lowering D(x) raises the score.
            prop_assert!(combine_score(j, d - dd, &cfg) > combine_score(j, d, &cfg));
        }
    }
}
