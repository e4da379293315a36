//! CSV tables of the closed-form quantities.

use anyhow::Result;
use mimgan_core::analysis::{
    rare_event_proportion, renyi_divergence, stability_factor, BinaryPerturbation, ProportionMode,
    StabilityScenario,
};
use mimgan_core::objectives::{bhattacharyya, equilibrium_objective, mim_equilibrium_value};
use mimgan_core::{DiscreteDist, ObjectiveKind};

use crate::args::{AnalyzeArgs, Table};

const PS: [f64; 7] = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 2e-2, 5e-2];
const GAMMAS: [f64; 3] = [1.0, 1.5, 2.0];

fn eps_grid() -> Vec<f64> {
    (-10..=10).map(|i| f64::from(i) / 50.0).collect()
}

/// Every valid perturbation from the given values, or the standard lists
/// for parameters left open.
fn perturbations(args: &AnalyzeArgs) -> Vec<BinaryPerturbation> {
    let ps = args.p.map_or(PS.to_vec(), |p| vec![p]);
    let gammas = args.gamma.map_or(GAMMAS.to_vec(), |g| vec![g]);
    let epss = args.eps.map_or_else(eps_grid, |e| vec![e]);
    let mut out = Vec::new();
    for &p in &ps {
        for &gamma in &gammas {
            for &eps in &epss {
                if let Ok(bp) = BinaryPerturbation::new(p, eps, gamma) {
                    out.push(bp);
                }
            }
        }
    }
    out
}

fn cell(v: mimgan_core::Result<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn binary(bp: &BinaryPerturbation) -> Result<(DiscreteDist, DiscreteDist)> {
    Ok((
        DiscreteDist::new(vec![bp.p(), 1.0 - bp.p()])?,
        DiscreteDist::new(vec![bp.q(), 1.0 - bp.q()])?,
    ))
}

fn row(prefix: &BinaryPerturbation, rest: Vec<String>) -> Vec<String> {
    let mut r = vec![
        prefix.p().to_string(),
        prefix.epsilon().to_string(),
        prefix.gamma().to_string(),
        prefix.q().to_string(),
    ];
    r.extend(rest);
    r
}

/// Header and rows of the requested table. An empty cell marks a value that
/// is undefined at that point.
pub fn build(args: &AnalyzeArgs) -> Result<(Vec<&'static str>, Vec<Vec<String>>)> {
    let mut rows = Vec::new();
    let header = match args.table {
        Table::Upsilon => {
            for bp in perturbations(args) {
                let mut vals = Vec::new();
                for mode in [ProportionMode::Exact, ProportionMode::Approx] {
                    for kind in [ObjectiveKind::Mim, ObjectiveKind::KlSaturating] {
                        vals.push(cell(rare_event_proportion(kind, mode, &bp)));
                    }
                }
                rows.push(row(&bp, vals));
            }
            vec!["p", "eps", "gamma", "q", "mim_exact", "kl_exact", "mim_approx", "kl_approx"]
        }
        Table::Stability => {
            let scenarios = [
                (StabilityScenario::PerfectDiscriminator, (0..=20).map(|i| f64::from(i) / 20.0).collect::<Vec<_>>()),
                (StabilityScenario::WorstDiscriminator, (-9..=9).map(|i| f64::from(i) / 20.0).collect()),
            ];
            for (scenario, grid) in scenarios {
                let epss = args.eps.map_or(grid, |e| vec![e]);
                for eps in epss {
                    if !scenario.contains(eps) {
                        continue;
                    }
                    let mut r = vec![scenario.name().to_string(), eps.to_string()];
                    for kind in [ObjectiveKind::Mim, ObjectiveKind::KlSaturating, ObjectiveKind::KlNonSaturating] {
                        r.push(cell(stability_factor(kind, scenario, eps)));
                    }
                    rows.push(r);
                }
            }
            vec!["scenario", "eps", "mim", "kl", "kl_ns"]
        }
        Table::Renyi => {
            for bp in perturbations(args) {
                let (p, q) = binary(&bp)?;
                let r_pq = renyi_divergence(&p, &q, 0.5)?;
                let r_qp = renyi_divergence(&q, &p, 0.5)?;
                rows.push(row(
                    &bp,
                    vec![
                        r_pq.to_string(),
                        r_qp.to_string(),
                        bhattacharyya(&p, &q).to_string(),
                        (mim_equilibrium_value() * (-0.5 * r_pq).exp()).to_string(),
                    ],
                ));
            }
            vec!["p", "eps", "gamma", "q", "renyi_pq", "renyi_qp", "bhattacharyya", "mim_from_renyi"]
        }
        Table::Equilibrium => {
            for bp in perturbations(args) {
                let (p, q) = binary(&bp)?;
                rows.push(row(
                    &bp,
                    vec![
                        equilibrium_objective(ObjectiveKind::Mim, &p, &q)?.to_string(),
                        equilibrium_objective(ObjectiveKind::KlSaturating, &p, &q)?.to_string(),
                    ],
                ));
            }
            vec!["p", "eps", "gamma", "q", "mim", "kl"]
        }
    };
    Ok((header, rows))
}

pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}
