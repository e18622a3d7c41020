//! Evaluation metrics.
//!
//! AUC credits a positive/negative pair with 1 when the positive scores
//! higher and 0.5 on a tie. [`subset_auc`] restricts the first element of each
//! pair to a subset `I` and pairs it against every row:
//!
//! ```text
//!  Σ_{i∈I} Σ_j ( I[y_i>y_j](I[ŷ_i>ŷ_j] + ½I[ŷ_i=ŷ_j]) + I[y_i<y_j](I[ŷ_i<ŷ_j] + ½I[ŷ_i=ŷ_j]) )
//!  ─────────────────────────────────────────────────────────────────────────────────────────
//!                         Σ_{i∈I} Σ_j ( I[y_i>y_j] + I[y_i<y_j] )
//! ```
//!
//! Pair credits are counted in integer half-units so the sort-based result is
//! bit-identical to the quadratic definition.

use std::cmp::Ordering;

use crate::error::{LcnError, Result};

fn binary_labels(labels: &[f64]) -> Result<Vec<bool>> {
    labels
        .iter()
        .map(|&y| {
            if y == 1.0 {
                Ok(true)
            } else if y == 0.0 {
                Ok(false)
            } else {
                Err(LcnError::InvalidConfig(format!("label {y} is not binary")))
            }
        })
        .collect()
}

fn check_scores(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(LcnError::DimensionMismatch {
            what: "scores vs labels",
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(LcnError::InvalidConfig("scores contain NaN".into()));
    }
    Ok(())
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}

/// `(#less, #equal)` in a sorted slice.
fn rank_counts(sorted: &[f64], s: f64) -> (u64, u64) {
    let lo = sorted.partition_point(|&v| v < s);
    let hi = sorted.partition_point(|&v| v <= s);
    (lo as u64, (hi - lo) as u64)
}

/// Area under the ROC curve with half credit for ties. `O(N log N)`.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_scores(scores, labels)?;
    let y = binary_labels(labels)?;
    let neg = sorted(
        scores
            .iter()
            .zip(&y)
            .filter(|(_, &p)| !p)
            .map(|(&s, _)| s)
            .collect(),
    );
    let n_pos = y.iter().filter(|&&p| p).count() as u64;
    let n_neg = neg.len() as u64;
    if n_pos == 0 || n_neg == 0 {
        return Err(LcnError::UndefinedMetric(
            "AUC needs at least one positive and one negative label".into(),
        ));
    }
    let mut half_units: u64 = 0;
    for (&s, _) in scores.iter().zip(&y).filter(|(_, &p)| p) {
        let (less, equal) = rank_counts(&neg, s);
        half_units += 2 * less + equal;
    }
    Ok(half_units as f64 / (2 * n_pos * n_neg) as f64)
}

/// AUC restricted to pairs whose first element is in `subset`. Duplicate
/// indices are counted once. `subset = 0..N` gives exactly [`auc`].
pub fn subset_auc(scores: &[f64], labels: &[f64], subset: &[usize]) -> Result<f64> {
    check_scores(scores, labels)?;
    let y = binary_labels(labels)?;
    if subset.is_empty() {
        return Err(LcnError::InvalidConfig("subset is empty".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= scores.len()) {
        return Err(LcnError::InvalidConfig(format!(
            "subset index {bad} out of range for {} rows",
            scores.len()
        )));
    }
    let mut idx = subset.to_vec();
    idx.sort_unstable();
    idx.dedup();
    let pick = |want: bool| -> Vec<f64> {
        sorted(
            scores
                .iter()
                .zip(&y)
                .filter(|(_, &p)| p == want)
                .map(|(&s, _)| s)
                .collect(),
        )
    };
    let pos = pick(true);
    let neg = pick(false);
    let mut num: u64 = 0;
    let mut den: u64 = 0;
    for i in idx {
        let s = scores[i];
        if y[i] {
            let (less, equal) = rank_counts(&neg, s);
            num += 2 * less + equal;
            den += 2 * neg.len() as u64;
        } else {
            let (less, equal) = rank_counts(&pos, s);
            let greater = pos.len() as u64 - less - equal;
            num += 2 * greater + equal;
            den += 2 * pos.len() as u64;
        }
    }
    if den == 0 {
        return Err(LcnError::UndefinedMetric(
            "no label-discordant pairs touch the subset".into(),
        ));
    }
    Ok(num as f64 / den as f64)
}

/// Root-mean-squared error. Panics on empty or mismatched inputs.
pub fn rmse(preds: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(preds.len(), targets.len(), "rmse: length mismatch");
    assert!(!preds.is_empty(), "rmse: empty input");
    let sse: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    (sse / preds.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

/// `runs[seed][label]`: mean and (population) standard deviation across
/// seeds for each label, then both averaged across labels.
pub fn summarize_across_seeds(runs: &[Vec<f64>]) -> Option<(Vec<MetricSummary>, MetricSummary)> {
    let n_labels = runs.first()?.len();
    if n_labels == 0 || runs.iter().any(|r| r.len() != n_labels) {
        return None;
    }
    let n = runs.len() as f64;
    let per_label: Vec<MetricSummary> = (0..n_labels)
        .map(|l| {
            let mean = runs.iter().map(|r| r[l]).sum::<f64>() / n;
            let var = runs.iter().map(|r| (r[l] - mean).powi(2)).sum::<f64>() / n;
            MetricSummary {
                mean,
                std: var.sqrt(),
            }
        })
        .collect();
    let k = n_labels as f64;
    let overall = MetricSummary {
        mean: per_label.iter().map(|s| s.mean).sum::<f64>() / k,
        std: per_label.iter().map(|s| s.std).sum::<f64>() / k,
    };
    Some((per_label, overall))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct double loop over all ordered pairs.
    fn brute(scores: &[f64], labels: &[f64], subset: &[usize]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for &i in subset {
            for j in 0..scores.len() {
                if labels[i] > labels[j] {
                    den += 1.0;
                    num += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                } else if labels[i] < labels[j] {
                    den += 1.0;
                    num += if scores[i] < scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn perfect_ranking() {
        assert_eq!(auc(&[0.9, 0.1], &[1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn all_ties_give_half() {
        assert_eq!(auc(&[0.3; 4], &[1.0, 0.0, 1.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn mixed_ties() {
        let a = auc(&[0.8, 0.5, 0.5, 0.2], &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(a, 0.875);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(auc(&[0.1, 0.2], &[1.0, 1.0]), Err(LcnError::UndefinedMetric(_))));
        assert!(matches!(
            subset_auc(&[0.1, 0.2], &[0.0, 0.0], &[0]),
            Err(LcnError::UndefinedMetric(_))
        ));
    }

    #[test]
    fn non_binary_labels_rejected() {
        assert!(auc(&[0.1, 0.2], &[1.0, 0.5]).is_err());
        assert!(auc(&[f64::NAN, 0.2], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn subset_with_top_positive() {
        let scores = [0.95, 0.4, 0.7, 0.1, 0.6];
        let labels = [1.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(subset_auc(&scores, &labels, &[0]).unwrap(), 1.0);
    }

    #[test]
    fn subset_matches_brute_force_small() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let scores: Vec<f64> = (0..20).map(|_| (rng.gen_range(0..8) as f64) / 8.0).collect();
            let mut labels: Vec<f64> = (0..20).map(|_| f64::from(rng.gen_bool(0.4))).collect();
            labels[0] = 1.0;
            labels[1] = 0.0;
            let subset: Vec<usize> = (0..5).map(|_| rng.gen_range(0..20)).collect();
            let mut uniq = subset.clone();
            uniq.sort_unstable();
            uniq.dedup();
            assert_eq!(subset_auc(&scores, &labels, &subset).unwrap(), brute(&scores, &labels, &uniq));
        }
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]) - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((rmse(&[1.5, -2.5, 0.5], &[1.0, -3.0, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn seed_summary_averages_labels() {
        let runs = vec![vec![0.8, 0.6], vec![0.6, 0.6]];
        let (per, all) = summarize_across_seeds(&runs).unwrap();
        assert!((per[0].mean - 0.7).abs() < 1e-15);
        assert!((per[0].std - 0.1).abs() < 1e-15);
        assert_eq!(per[1].std, 0.0);
        assert!((all.mean - 0.65).abs() < 1e-15);
        assert!((all.std - 0.05).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn auc_equals_brute_force(
            raw in prop::collection::vec((0u8..12, any::<bool>()), 2..120)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 * 0.25).collect();
            let labels: Vec<f64> = raw.iter().map(|(_, y)| f64::from(*y)).collect();
            prop_assume!(labels.contains(&1.0) && labels.contains(&0.0));
            let all: Vec<usize> = (0..scores.len()).collect();
            let a = auc(&scores, &labels).unwrap();
            prop_assert_eq!(a, brute(&scores, &labels, &all));
            prop_assert_eq!(a, subset_auc(&scores, &labels, &all).unwrap());
        }

        #[test]
        fn auc_invariant_under_increasing_transform(
            raw in prop::collection::vec((-50i32..50, any::<bool>()), 2..80)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 10.0).collect();
            let labels: Vec<f64> = raw.iter().map(|(_, y)| f64::from(*y)).collect();
            prop_assume!(labels.contains(&1.0) && labels.contains(&0.0));
            let transformed: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 3.0).collect();
            prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&transformed, &labels).unwrap());
        }

        #[test]
        fn rmse_of_constant_shift(v in prop::collection::vec(-100.0f64..100.0, 1..50), c in -10.0f64..10.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            prop_assert!((rmse(&shifted, &v) - c.abs()).abs() <= 1e-9 * (1.0 + c.abs()));
        }
    }
}
