//! ROC curves, AUC and F1.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MODULE: &str = "metrics";

/// Points `(fpr, tpr)` from `(0, 0)` to `(1, 1)` plus the area beneath them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

fn check_scored(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(
            MODULE,
            format!("{} scores but {} labels", scores.len(), labels.len()),
        ));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::non_finite(MODULE, format!("score {i}")));
    }
    if let Some(i) = labels.iter().position(|&l| l > 1) {
        return Err(Error::invalid(MODULE, format!("label {i} is {}, expected 0 or 1", labels[i])));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(
            MODULE,
            format!("ROC needs both classes, got {pos} positive and {neg} negative"),
        ));
    }
    Ok((pos, neg))
}

/// ROC curve swept over every distinct score, highest first.
///
/// Samples sharing a score move the curve diagonally in one step, so the
/// trapezoidal area gives tied pairs half credit.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    let (pos, neg) = check_scored(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // Counts are summed exactly; the division happens once per segment.
        auc += (fp - fp0) as f64 * (tp + tp0) as f64;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = auc / (2.0 * pos as f64 * neg as f64);
    Ok(RocCurve { points, auc })
}

/// Pairwise Mann–Whitney estimate of `P(s⁺ > s⁻) + ½·P(s⁺ = s⁻)`.
///
/// Quadratic in the input size; kept as an independent check on [`roc_auc`].
pub fn mann_whitney_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_scored(scores, labels)?;
    let mut twice_wins: u64 = 0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            twice_wins += match si.partial_cmp(&sj) {
                Some(std::cmp::Ordering::Greater) => 2,
                Some(std::cmp::Ordering::Equal) => 1,
                _ => 0,
            };
        }
    }
    Ok(twice_wins as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Trapezoidal area under a polyline of `(x, y)` points.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
        .sum()
}

/// Confusion counts of binary decisions against labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_decisions(decisions: &[u8], labels: &[u8]) -> Result<Self> {
        if decisions.len() != labels.len() {
            return Err(Error::invalid(
                MODULE,
                format!("{} decisions but {} labels", decisions.len(), labels.len()),
            ));
        }
        let mut c = Confusion::default();
        for (&d, &l) in decisions.iter().zip(labels) {
            match (d, l) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 0) => c.tn += 1,
                (0, 1) => c.fn_ += 1,
                _ => return Err(Error::invalid(MODULE, format!("non-binary pair ({d}, {l})"))),
            }
        }
        Ok(c)
    }

    /// `2·TP / (2·TP + FP + FN)`, which equals the harmonic mean of precision
    /// and recall, and 0 when nothing is predicted positive.
    pub fn f1(&self) -> f64 {
        if self.tp + self.fp == 0 {
            return 0.0;
        }
        let denom = 2 * self.tp + self.fp + self.fn_;
        2.0 * self.tp as f64 / denom as f64
    }

    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }
}

pub fn f1_score(decisions: &[u8], labels: &[u8]) -> Result<f64> {
    Ok(Confusion::from_decisions(decisions, labels)?.f1())
}

impl RocCurve {
    /// Writes `fpr,tpr` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["fpr", "tpr"])?;
        for &(f, t) in &self.points {
            out.write_record([f.to_string(), t.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("<roc>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_separation() {
        let roc = roc_auc(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0]).unwrap();
        assert_eq!(roc.auc, 1.0);
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn all_ties_give_one_half() {
        let roc = roc_auc(&[0.3; 6], &[1, 0, 1, 0, 0, 0]).unwrap();
        assert_eq!(roc.auc, 0.5);
        assert_eq!(roc.points, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn mixed_example_by_pairs() {
        let s = [0.9, 0.4, 0.35, 0.8];
        let l = [1, 0, 1, 0];
        assert_eq!(roc_auc(&s, &l).unwrap().auc, 0.5);
        assert_eq!(mann_whitney_auc(&s, &l).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(roc_auc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(roc_auc(&[], &[]).is_err());
        assert!(roc_auc(&[0.1], &[1, 0]).is_err());
        assert!(roc_auc(&[f64::NAN, 0.2], &[1, 0]).is_err());
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1_score(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        // TP=2, FP=1, FN=1.
        let f = f1_score(&[1, 1, 1, 0, 0], &[1, 1, 0, 1, 0]).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(f1_score(&[0, 0, 0], &[1, 0, 1]).unwrap(), 0.0);
        assert!(f1_score(&[0, 1], &[1]).is_err());
    }

    #[test]
    fn csv_header() {
        let roc = roc_auc(&[0.9, 0.1], &[1, 0]).unwrap();
        let mut buf = Vec::new();
        roc.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("fpr,tpr\n0,0\n"));
    }

    fn scored_set() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec((0u8..6).prop_map(|k| k as f64 / 5.0), n),
                prop::collection::vec(0u8..2, n),
            )
        })
        .prop_filter("both classes", |(_, l)| l.contains(&0) && l.contains(&1))
    }

    proptest! {
        #[test]
        fn trapezoid_matches_pairs((s, l) in scored_set()) {
            let roc = roc_auc(&s, &l).unwrap();
            let mw = mann_whitney_auc(&s, &l).unwrap();
            prop_assert!((roc.auc - mw).abs() < 1e-12);
            prop_assert!((trapezoid_area(&roc.points) - roc.auc).abs() < 1e-12);
            for w in roc.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
        }

        #[test]
        fn invariant_under_increasing_transform((s, l) in scored_set()) {
            let a = roc_auc(&s, &l).unwrap().auc;
            let t: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
            prop_assert_eq!(a, roc_auc(&t, &l).unwrap().auc);
        }

        #[test]
        fn order_does_not_matter((s, l) in scored_set(), rot in 0usize..40) {
            let k = rot % s.len();
            let (mut s2, mut l2) = (s.clone(), l.clone());
            s2.rotate_left(k);
            l2.rotate_left(k);
            prop_assert_eq!(roc_auc(&s, &l).unwrap(), roc_auc(&s2, &l2).unwrap());
        }
    }
}
