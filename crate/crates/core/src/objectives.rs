//! GAN objectives.
//!
//! Every loss here is returned in descent form: its owner minimises it. The
//! MIM pair is `D: min E[exp(1−D(x))] + E[exp(D(G(z)))]`, `G: max` of the same,
//! so the generator's descent loss is `−E[exp(D(G(z)))]`.
//!
//! Each loss has a plain evaluator over slices and a taped twin used during
//! training; the two are implemented separately and cross-checked in tests.

use std::f64::consts::{E, LN_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

const MODULE: &str = "objectives";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveKind {
    #[serde(rename = "mim")]
    Mim,
    #[serde(rename = "kl")]
    KlSaturating,
    #[serde(rename = "kl-ns")]
    KlNonSaturating,
    #[serde(rename = "ls")]
    LeastSquares,
    #[serde(rename = "w")]
    Wasserstein,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 5] = [
        ObjectiveKind::Mim,
        ObjectiveKind::KlSaturating,
        ObjectiveKind::KlNonSaturating,
        ObjectiveKind::LeastSquares,
        ObjectiveKind::Wasserstein,
    ];

    /// Short name used on the command line and in file names.
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Mim => "mim",
            ObjectiveKind::KlSaturating => "kl",
            ObjectiveKind::KlNonSaturating => "kl-ns",
            ObjectiveKind::LeastSquares => "ls",
            ObjectiveKind::Wasserstein => "w",
        }
    }

    /// Whether the discriminator ends in a sigmoid. WGAN critics are unbounded.
    pub fn bounded_discriminator(self) -> bool {
        self != ObjectiveKind::Wasserstein
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObjectiveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(MODULE, format!("unknown objective '{s}' (expected mim, kl, kl-ns, ls or w)")))
    }
}

/// A probability vector over a finite support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDist(Vec<f64>);

impl DiscreteDist {
    /// Accepts non-negative finite entries summing to 1 within 1e-12.
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::invalid(MODULE, "empty distribution"));
        }
        if let Some(bad) = probabilities.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid(MODULE, format!("invalid probability {bad}")));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(MODULE, format!("probabilities sum to {total}, not 1")));
        }
        Ok(DiscreteDist(probabilities))
    }

    /// Normalises non-negative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(MODULE, "weights must be finite, non-negative and not all zero"));
        }
        DiscreteDist::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn check_aligned(&self, other: &DiscreteDist) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::invalid(
                MODULE,
                format!("support mismatch: {} vs {} atoms", self.len(), other.len()),
            ));
        }
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_batch(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid(MODULE, format!("{name} batch is empty")));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite(MODULE, format!("{name} batch")));
    }
    Ok(())
}

/// Which end of [0, 1] a log term forbids.
#[derive(Clone, Copy)]
enum Open {
    Neither,
    Zero,
    One,
}

fn check_unit(name: &str, xs: &[f64], open: Open) -> Result<()> {
    for &v in xs {
        let ok = match open {
            Open::Neither => (0.0..=1.0).contains(&v),
            Open::Zero => v > 0.0 && v <= 1.0,
            Open::One => (0.0..1.0).contains(&v),
        };
        if !ok {
            return Err(Error::domain(MODULE, format!("{name} output {v} outside the allowed unit interval")));
        }
    }
    Ok(())
}

fn check_discriminator_inputs(kind: ObjectiveKind, d_real: &[f64], d_fake: &[f64]) -> Result<()> {
    check_batch("d_real", d_real)?;
    check_batch("d_fake", d_fake)?;
    match kind {
        ObjectiveKind::Mim | ObjectiveKind::LeastSquares => {
            check_unit("d_real", d_real, Open::Neither)?;
            check_unit("d_fake", d_fake, Open::Neither)
        }
        ObjectiveKind::KlSaturating | ObjectiveKind::KlNonSaturating => {
            check_unit("d_real", d_real, Open::Zero)?;
            check_unit("d_fake", d_fake, Open::One)
        }
        ObjectiveKind::Wasserstein => Ok(()),
    }
}

fn check_generator_inputs(kind: ObjectiveKind, d_fake: &[f64]) -> Result<()> {
    check_batch("d_fake", d_fake)?;
    match kind {
        ObjectiveKind::Mim | ObjectiveKind::LeastSquares => check_unit("d_fake", d_fake, Open::Neither),
        ObjectiveKind::KlSaturating => check_unit("d_fake", d_fake, Open::One),
        ObjectiveKind::KlNonSaturating => check_unit("d_fake", d_fake, Open::Zero),
        ObjectiveKind::Wasserstein => Ok(()),
    }
}

/// Discriminator loss on discriminator outputs for real and generated batches.
pub fn discriminator_loss(kind: ObjectiveKind, d_real: &[f64], d_fake: &[f64]) -> Result<f64> {
    check_discriminator_inputs(kind, d_real, d_fake)?;
    let loss = match kind {
        ObjectiveKind::Mim => {
            mean(&d_real.iter().map(|d| (1.0 - d).exp()).collect::<Vec<_>>())
                + mean(&d_fake.iter().map(|d| d.exp()).collect::<Vec<_>>())
        }
        ObjectiveKind::KlSaturating | ObjectiveKind::KlNonSaturating => {
            -(mean(&d_real.iter().map(|d| d.ln()).collect::<Vec<_>>())
                + mean(&d_fake.iter().map(|d| (1.0 - d).ln()).collect::<Vec<_>>()))
        }
        ObjectiveKind::LeastSquares => {
            0.5 * mean(&d_real.iter().map(|d| (d - 1.0).powi(2)).collect::<Vec<_>>())
                + 0.5 * mean(&d_fake.iter().map(|d| d * d).collect::<Vec<_>>())
        }
        ObjectiveKind::Wasserstein => mean(d_fake) - mean(d_real),
    };
    Ok(loss)
}

/// Generator loss on discriminator outputs for a generated batch.
pub fn generator_loss(kind: ObjectiveKind, d_fake: &[f64]) -> Result<f64> {
    check_generator_inputs(kind, d_fake)?;
    let loss = match kind {
        ObjectiveKind::Mim => -mean(&d_fake.iter().map(|d| d.exp()).collect::<Vec<_>>()),
        ObjectiveKind::KlSaturating => mean(&d_fake.iter().map(|d| (1.0 - d).ln()).collect::<Vec<_>>()),
        ObjectiveKind::KlNonSaturating => -mean(&d_fake.iter().map(|d| d.ln()).collect::<Vec<_>>()),
        ObjectiveKind::LeastSquares => 0.5 * mean(&d_fake.iter().map(|d| (d - 1.0).powi(2)).collect::<Vec<_>>()),
        ObjectiveKind::Wasserstein => -mean(d_fake),
    };
    Ok(loss)
}

/// The full game value as seen by the generator, signed so that the
/// generator pushes it down.
///
/// MIM: `−(E[exp(1−D(x))] + E[exp(D(G(z)))])`.
/// KL (both variants): `E[ln D(x)] + E[ln(1−D(G(z)))]`.
/// LS: `½E[(D(G(z))−1)²]`. W: `E[D(x)] − E[D(G(z))]`.
///
/// Unlike [`generator_loss`] this keeps the terms that do not depend on the
/// generator, so it is comparable across iterations of a curve.
pub fn generator_objective(kind: ObjectiveKind, d_real: &[f64], d_fake: &[f64]) -> Result<f64> {
    check_discriminator_inputs(kind, d_real, d_fake)?;
    Ok(match kind {
        ObjectiveKind::Mim => -discriminator_loss(kind, d_real, d_fake)?,
        ObjectiveKind::KlSaturating | ObjectiveKind::KlNonSaturating => -discriminator_loss(kind, d_real, d_fake)?,
        ObjectiveKind::LeastSquares => generator_loss(kind, d_fake)?,
        ObjectiveKind::Wasserstein => -discriminator_loss(kind, d_real, d_fake)?,
    })
}

fn tape_values(tape: &Tape, v: Var) -> &[f64] {
    tape.value(v).as_slice()
}

/// Taped discriminator loss; `d_real`, `d_fake` are discriminator outputs.
pub fn discriminator_loss_on(tape: &mut Tape, kind: ObjectiveKind, d_real: Var, d_fake: Var) -> Result<Var> {
    check_discriminator_inputs(kind, tape_values(tape, d_real), tape_values(tape, d_fake))?;
    match kind {
        ObjectiveKind::Mim => {
            let shifted = tape.scale_shift(d_real, -1.0, 1.0)?;
            let real_term = tape.exp(shifted)?;
            let real_term = tape.mean(real_term)?;
            let fake_term = tape.exp(d_fake)?;
            let fake_term = tape.mean(fake_term)?;
            tape.affine(&[(real_term, 1.0), (fake_term, 1.0)], 0.0)
        }
        ObjectiveKind::KlSaturating | ObjectiveKind::KlNonSaturating => {
            let log_real = tape.log(d_real)?;
            let log_real = tape.mean(log_real)?;
            let one_minus = tape.scale_shift(d_fake, -1.0, 1.0)?;
            let log_fake = tape.log(one_minus)?;
            let log_fake = tape.mean(log_fake)?;
            tape.affine(&[(log_real, -1.0), (log_fake, -1.0)], 0.0)
        }
        ObjectiveKind::LeastSquares => {
            let r = tape.scale_shift(d_real, 1.0, -1.0)?;
            let r = tape.power(r, 2.0)?;
            let r = tape.mean(r)?;
            let f = tape.power(d_fake, 2.0)?;
            let f = tape.mean(f)?;
            tape.affine(&[(r, 0.5), (f, 0.5)], 0.0)
        }
        ObjectiveKind::Wasserstein => {
            let r = tape.mean(d_real)?;
            let f = tape.mean(d_fake)?;
            tape.affine(&[(f, 1.0), (r, -1.0)], 0.0)
        }
    }
}

/// Taped generator loss on `d_fake = D(G(z))`.
pub fn generator_loss_on(tape: &mut Tape, kind: ObjectiveKind, d_fake: Var) -> Result<Var> {
    check_generator_inputs(kind, tape_values(tape, d_fake))?;
    match kind {
        ObjectiveKind::Mim => {
            let e = tape.exp(d_fake)?;
            let m = tape.mean(e)?;
            tape.scale_shift(m, -1.0, 0.0)
        }
        ObjectiveKind::KlSaturating => {
            let one_minus = tape.scale_shift(d_fake, -1.0, 1.0)?;
            let l = tape.log(one_minus)?;
            tape.mean(l)
        }
        ObjectiveKind::KlNonSaturating => {
            let l = tape.log(d_fake)?;
            let m = tape.mean(l)?;
            tape.scale_shift(m, -1.0, 0.0)
        }
        ObjectiveKind::LeastSquares => {
            let r = tape.scale_shift(d_fake, 1.0, -1.0)?;
            let r = tape.power(r, 2.0)?;
            let m = tape.mean(r)?;
            tape.scale_shift(m, 0.5, 0.0)
        }
        ObjectiveKind::Wasserstein => {
            let m = tape.mean(d_fake)?;
            tape.scale_shift(m, -1.0, 0.0)
        }
    }
}

/// Closed-form optimal discriminator at a point with densities `p_real`, `p_gen`.
///
/// MIM: `½ + ½·ln(p_real/p_gen)`, which is unbounded. KL: `p_real/(p_real+p_gen)`.
pub fn optimal_discriminator(kind: ObjectiveKind, p_real: f64, p_gen: f64) -> Result<f64> {
    if !(p_real > 0.0 && p_gen > 0.0) || !p_real.is_finite() || !p_gen.is_finite() {
        return Err(Error::domain(
            MODULE,
            format!("densities must be positive and finite, got {p_real} and {p_gen}"),
        ));
    }
    match kind {
        ObjectiveKind::Mim => Ok(0.5 + 0.5 * (p_real.ln() - p_gen.ln())),
        ObjectiveKind::KlSaturating | ObjectiveKind::KlNonSaturating => Ok(p_real / (p_real + p_gen)),
        other => Err(Error::invalid(MODULE, format!("no closed-form optimal discriminator for {other}"))),
    }
}

/// Pointwise MIM integrand `a·exp(1−d) + b·exp(d)` for densities `a`, `b`.
pub fn mim_pointwise(p_real: f64, p_gen: f64, d: f64) -> f64 {
    p_real * (1.0 - d).exp() + p_gen * d.exp()
}

/// Objective value at the optimal discriminator for discrete `p` (real) and `q` (generated).
///
/// MIM: `2√e · Σ √(p·q)`, maximal (= 2√e) exactly when `p == q`.
/// KL: `Σ p·ln(p/(p+q)) + q·ln(q/(p+q))`, minimal (= −2 ln 2) when `p == q`.
pub fn equilibrium_objective(kind: ObjectiveKind, p: &DiscreteDist, q: &DiscreteDist) -> Result<f64> {
    p.check_aligned(q)?;
    match kind {
        ObjectiveKind::Mim => Ok(2.0 * E.sqrt() * bhattacharyya(p, q)),
        ObjectiveKind::KlSaturating | ObjectiveKind::KlNonSaturating => {
            let mut total = 0.0;
            for (&a, &b) in p.probs().iter().zip(q.probs()) {
                let s = a + b;
                if a > 0.0 {
                    total += a * (a / s).ln();
                }
                if b > 0.0 {
                    total += b * (b / s).ln();
                }
            }
            Ok(total)
        }
        other => Err(Error::invalid(MODULE, format!("no closed-form equilibrium objective for {other}"))),
    }
}

/// `Σ √(p·q)`.
pub fn bhattacharyya(p: &DiscreteDist, q: &DiscreteDist) -> f64 {
    p.probs().iter().zip(q.probs()).map(|(a, b)| (a * b).sqrt()).sum()
}

/// The MIM equilibrium constant `2√e`.
pub fn mim_equilibrium_value() -> f64 {
    2.0 * E.sqrt()
}

/// The KL equilibrium constant `−2 ln 2`.
pub fn kl_equilibrium_value() -> f64 {
    -2.0 * LN_2
}
