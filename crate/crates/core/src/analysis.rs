//! Closed-form quantities at the optimal discriminator.
//!
//! * Rényi divergence between discrete distributions.
//! * Proportion Υ of the rare atom of a binary distribution `{p, 1−p}` in the
//!   optimal-discriminator objective when the generator reproduces it as
//!   `{q, 1−q}` with `q = p + ε·p^γ`, both exactly and through the
//!   second-order Taylor forms.
//! * Multiplicative factors a discriminator disturbance ε puts on the
//!   generator gradient.
//! * Share of the MIM equilibrium objective carried by a set of atoms.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{DiscreteDist, ObjectiveKind};

const MODULE: &str = "analysis";

/// Rényi divergence of order `alpha` (`alpha > 0`, `alpha ≠ 1`).
///
/// `(1/(α−1))·ln Σ_x P(x)·(P(x)/Q(x))^{α−1}`, summed in log space.
pub fn renyi_divergence(p: &DiscreteDist, q: &DiscreteDist, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) || alpha == 1.0 || !alpha.is_finite() {
        return Err(Error::invalid(MODULE, format!("Rényi order must be positive and != 1, got {alpha}")));
    }
    p.check_aligned(q)?;
    let mut logs = Vec::with_capacity(p.len());
    for (i, (&a, &b)) in p.probs().iter().zip(q.probs()).enumerate() {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::domain(
                MODULE,
                format!("P is not absolutely continuous w.r.t. Q at atom {i}"),
            ));
        }
        let (la, lb) = (a.ln(), b.ln());
        logs.push(la + (alpha - 1.0) * (la - lb));
    }
    let lse = log_sum_exp(&logs);
    Ok((lse / (alpha - 1.0)).max(0.0))
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Share of `Σ√(P·Q)` carried by the atoms in `large_support`.
///
/// At the MIM optimal discriminator every atom contributes `2√e·√(P·Q)` to the
/// objective, so this is the proportion of large-probability events in it.
pub fn large_event_proportion(p: &DiscreteDist, q: &DiscreteDist, large_support: &[usize]) -> Result<f64> {
    p.check_aligned(q)?;
    let mut member = vec![false; p.len()];
    for &i in large_support {
        if i >= p.len() {
            return Err(Error::invalid(MODULE, format!("atom {i} is outside a support of {}", p.len())));
        }
        member[i] = true;
    }
    let weights: Vec<f64> = p.probs().iter().zip(q.probs()).map(|(a, b)| (a * b).sqrt()).collect();
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(Error::domain(MODULE, "P and Q share no support"));
    }
    let large: f64 = weights.iter().zip(&member).filter(|(_, &m)| m).map(|(w, _)| w).sum();
    Ok(large / total)
}

/// Real distribution `{p, 1−p}` and its perturbed reproduction
/// `{q, 1−q}`, `q = p + ε·p^γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryPerturbation {
    p: f64,
    epsilon: f64,
    gamma: f64,
}

impl BinaryPerturbation {
    /// Requires `0 < p < ½`, `γ ≥ 1` and a perturbed `q` in `(0, ½)`.
    pub fn new(p: f64, epsilon: f64, gamma: f64) -> Result<Self> {
        if !(p > 0.0 && p < 0.5) {
            return Err(Error::invalid(MODULE, format!("rare probability p must lie in (0, 1/2), got {p}")));
        }
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(Error::invalid(MODULE, format!("gamma must be >= 1, got {gamma}")));
        }
        if !epsilon.is_finite() {
            return Err(Error::invalid(MODULE, "epsilon must be finite"));
        }
        let bp = BinaryPerturbation { p, epsilon, gamma };
        let q = bp.q();
        if !(q > 0.0 && q < 0.5) {
            return Err(Error::invalid(
                MODULE,
                format!("perturbed probability q = {q} leaves (0, 1/2) for p={p}, eps={epsilon}, gamma={gamma}"),
            ));
        }
        Ok(bp)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `p^γ`, evaluated as `exp(γ·ln p)`.
    fn p_pow(&self, exponent: f64) -> f64 {
        (exponent * self.p.ln()).exp()
    }

    /// `ε·p^γ`.
    pub fn shift(&self) -> f64 {
        self.epsilon * self.p_pow(self.gamma)
    }

    pub fn q(&self) -> f64 {
        self.p + self.shift()
    }

    /// `q/p − 1 = ε·p^{γ−1}`.
    fn rare_ratio(&self) -> f64 {
        self.epsilon * self.p_pow(self.gamma - 1.0)
    }

    /// `1 − (1−q)/(1−p) = ε·p^γ/(1−p)`.
    fn common_ratio(&self) -> f64 {
        self.shift() / (1.0 - self.p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProportionMode {
    /// Ratio of the unexpanded objective terms.
    Exact,
    /// Second-order Taylor form.
    Approx,
}

fn rare_kind(kind: ObjectiveKind) -> Result<bool> {
    match kind {
        ObjectiveKind::Mim => Ok(true),
        ObjectiveKind::KlSaturating | ObjectiveKind::KlNonSaturating => Ok(false),
        other => Err(Error::invalid(MODULE, format!("rare-event proportion is defined for mim and kl, not {other}"))),
    }
}

/// Proportion Υ of the rare atom in the optimal-discriminator objective.
pub fn rare_event_proportion(kind: ObjectiveKind, mode: ProportionMode, bp: &BinaryPerturbation) -> Result<f64> {
    let is_mim = rare_kind(kind)?;
    let p = bp.p;
    Ok(match mode {
        ProportionMode::Exact if is_mim => {
            // The common factor 2√e cancels.
            let rare = p * (1.0 + bp.rare_ratio()).sqrt();
            let common = (1.0 - p) * (1.0 - bp.common_ratio()).sqrt();
            rare / (rare + common)
        }
        ProportionMode::Exact => {
            let r = bp.rare_ratio();
            let s = bp.common_ratio();
            // ln(2 + r) and ln((1+r)/(2+r)) via ln_1p to keep precision at tiny r.
            let ln_two_r = LN_2 + (0.5 * r).ln_1p();
            let rare = -p * ln_two_r + p * (1.0 + r) * (r.ln_1p() - ln_two_r);
            let ln_two_s = LN_2 + (-0.5 * s).ln_1p();
            let common = -(1.0 - p) * ln_two_s + (1.0 - p) * (1.0 - s) * ((-s).ln_1p() - ln_two_s);
            rare / (rare + common)
        }
        ProportionMode::Approx => {
            let c = if is_mim { 0.125 } else { 0.125 / LN_2 };
            let t = bp.epsilon * bp.epsilon * bp.p_pow(2.0 * bp.gamma - 1.0);
            (0.5 * (p + bp.q()) - c * t) / (1.0 - c * t / (1.0 - p))
        }
    })
}

/// The `(p, ε, γ)` grid used for the rare-event tables:
/// `p ∈ {1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 2e-2, 5e-2}`, `ε ∈ [−0.2, 0.2]` in
/// steps of 0.02, `γ ∈ {1, 1.5, 2}`, keeping only valid perturbations.
pub fn standard_perturbation_grid() -> Vec<BinaryPerturbation> {
    const PS: [f64; 7] = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 2e-2, 5e-2];
    const GAMMAS: [f64; 3] = [1.0, 1.5, 2.0];
    let mut grid = Vec::new();
    for &p in &PS {
        for &gamma in &GAMMAS {
            for i in -10..=10 {
                let eps = f64::from(i) / 50.0;
                if let Ok(bp) = BinaryPerturbation::new(p, eps, gamma) {
                    grid.push(bp);
                }
            }
        }
    }
    grid
}

/// Reference discriminator around which the disturbance ε is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityScenario {
    /// `D̃*(G(z)) = 0`, `ε ∈ [0, 1]`.
    PerfectDiscriminator,
    /// `Ď*(G(z)) = ½`, `|ε| < ½`.
    WorstDiscriminator,
}

impl StabilityScenario {
    pub fn name(self) -> &'static str {
        match self {
            StabilityScenario::PerfectDiscriminator => "perfect",
            StabilityScenario::WorstDiscriminator => "worst",
        }
    }

    pub fn contains(self, epsilon: f64) -> bool {
        match self {
            StabilityScenario::PerfectDiscriminator => (0.0..=1.0).contains(&epsilon),
            StabilityScenario::WorstDiscriminator => epsilon.abs() < 0.5,
        }
    }
}

impl fmt::Display for StabilityScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StabilityScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(StabilityScenario::PerfectDiscriminator),
            "worst" => Ok(StabilityScenario::WorstDiscriminator),
            _ => Err(Error::invalid(MODULE, format!("unknown scenario '{s}' (expected perfect or worst)"))),
        }
    }
}

/// Magnitude of the factor multiplying `E[∇ₓD·∇_θ g_θ]` in the generator
/// gradient when the discriminator is off by `epsilon`.
pub fn stability_factor(kind: ObjectiveKind, scenario: StabilityScenario, epsilon: f64) -> Result<f64> {
    if !scenario.contains(epsilon) {
        return Err(Error::invalid(
            MODULE,
            format!("epsilon {epsilon} is outside the {scenario} scenario's range"),
        ));
    }
    use ObjectiveKind::*;
    use StabilityScenario::*;
    let denominator = match (kind, scenario) {
        (Mim, PerfectDiscriminator) => return Ok(epsilon.exp()),
        (Mim, WorstDiscriminator) => return Ok((0.5 + epsilon).exp()),
        (KlSaturating, PerfectDiscriminator) => 1.0 - epsilon,
        (KlNonSaturating, PerfectDiscriminator) => epsilon,
        (KlSaturating, WorstDiscriminator) => 0.5 - epsilon,
        (KlNonSaturating, WorstDiscriminator) => 0.5 + epsilon,
        (other, _) => {
            return Err(Error::invalid(MODULE, format!("no stability factor for {other}")));
        }
    };
    if denominator == 0.0 {
        return Err(Error::domain(
            MODULE,
            format!("stability factor of {kind} diverges at epsilon = {epsilon}"),
        ));
    }
    Ok(1.0 / denominator)
}
