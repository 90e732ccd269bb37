//! Exact binary-classification metrics.
//!
//! AUROC comes from the Mann-Whitney statistic with midrank tie handling,
//! AUPRC from the average-precision step form with tied scores processed as
//! one block. Everything is computed in f64 from the full sample list; no
//! sampling, no binning.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("undefined metric {metric}: {reason}")]
    Undefined {
        metric: &'static str,
        reason: String,
    },
    #[error("non-finite score for sample {id:?}")]
    NonFiniteScore { id: String },
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// One scored prediction against its ground-truth label.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub id: String,
    pub score: f64,
    pub label: u8,
}

impl ScoredSample {
    pub fn new(id: impl Into<String>, score: f64, label: u8) -> Self {
        Self {
            id: id.into(),
            score,
            label,
        }
    }
}

/// Headline metrics plus the full ROC and PR curves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auroc: f64,
    pub auprc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub threshold: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub auprc_estimator: String,
    #[serde(rename = "roc")]
    pub roc_points: Vec<[f64; 2]>,
    #[serde(rename = "pr")]
    pub pr_points: Vec<[f64; 2]>,
}

fn validate(samples: &[ScoredSample]) -> Result<(usize, usize)> {
    let mut n_pos = 0;
    let mut n_neg = 0;
    for s in samples {
        if !s.score.is_finite() {
            return Err(MetricError::NonFiniteScore { id: s.id.clone() });
        }
        match s.label {
            0 => n_neg += 1,
            1 => n_pos += 1,
            other => {
                return Err(MetricError::Undefined {
                    metric: "labels",
                    reason: format!("label {other} for {:?} is not binary", s.id),
                })
            }
        }
    }
    Ok((n_pos, n_neg))
}

fn require_both_classes(metric: &'static str, n_pos: usize, n_neg: usize) -> Result<()> {
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::Undefined {
            metric,
            reason: format!("needs both classes, got {n_pos} positive / {n_neg} negative"),
        });
    }
    Ok(())
}

/// Indices sorted by descending score; tied scores keep input order.
fn sorted_desc(samples: &[ScoredSample]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| samples[b].score.total_cmp(&samples[a].score));
    idx
}

/// Area under the ROC curve via the Mann-Whitney rank statistic.
///
/// Tied scores receive midranks, which makes the result exactly the
/// trapezoidal area under the tie-aware ROC curve and exactly the pairwise
/// statistic `P(score_pos > score_neg) + P(score_pos = score_neg) / 2`.
pub fn auroc(samples: &[ScoredSample]) -> Result<f64> {
    let (n_pos, n_neg) = validate(samples)?;
    require_both_classes("auroc", n_pos, n_neg)?;

    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| samples[a].score.total_cmp(&samples[b].score));

    let mut rank_sum_pos = 0f64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && samples[idx[j]].score == samples[idx[i]].score {
            j += 1;
        }
        // ranks are 1-based; the tie block [i, j) shares the midrank
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            if samples[k].label == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// ROC curve as `(fpr, tpr)` points from a descending threshold sweep with
/// tied scores grouped; starts at `(0, 0)` and ends at `(1, 1)`.
pub fn roc_curve(samples: &[ScoredSample]) -> Result<Vec<[f64; 2]>> {
    let (n_pos, n_neg) = validate(samples)?;
    require_both_classes("roc_curve", n_pos, n_neg)?;

    let idx = sorted_desc(samples);
    let mut points = vec![[0.0, 0.0]];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let score = samples[idx[i]].score;
        while i < idx.len() && samples[idx[i]].score == score {
            match samples[idx[i]].label {
                1 => tp += 1,
                _ => fp += 1,
            }
            i += 1;
        }
        points.push([fp as f64 / n_neg as f64, tp as f64 / n_pos as f64]);
    }
    Ok(points)
}

/// Trapezoidal area under a curve of `(x, y)` points.
pub fn trapezoid_area(points: &[[f64; 2]]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]) * (w[0][1] + w[1][1]) / 2.0)
        .sum()
}

/// Area under the precision-recall curve in average-precision form:
/// the sum of `delta_recall * precision` over descending-score cut points,
/// with tied scores processed as a single block.
pub fn auprc(samples: &[ScoredSample]) -> Result<f64> {
    let (n_pos, _) = validate(samples)?;
    if n_pos == 0 {
        return Err(MetricError::Undefined {
            metric: "auprc",
            reason: "needs at least one positive sample".into(),
        });
    }
    let mut ap = 0f64;
    let mut prev_recall = 0f64;
    for [recall, precision] in pr_cut_points(samples, n_pos) {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

fn pr_cut_points(samples: &[ScoredSample], n_pos: usize) -> Vec<[f64; 2]> {
    let idx = sorted_desc(samples);
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let score = samples[idx[i]].score;
        while i < idx.len() && samples[idx[i]].score == score {
            match samples[idx[i]].label {
                1 => tp += 1,
                _ => fp += 1,
            }
            i += 1;
        }
        points.push([tp as f64 / n_pos as f64, tp as f64 / (tp + fp) as f64]);
    }
    points
}

/// PR curve as `(recall, precision)` points, anchored at `(0, 1)`.
pub fn pr_curve(samples: &[ScoredSample]) -> Result<Vec<[f64; 2]>> {
    let (n_pos, _) = validate(samples)?;
    if n_pos == 0 {
        return Err(MetricError::Undefined {
            metric: "pr_curve",
            reason: "needs at least one positive sample".into(),
        });
    }
    let mut points = vec![[0.0, 1.0]];
    points.extend(pr_cut_points(samples, n_pos));
    Ok(points)
}

/// Confusion counts and rates at a threshold; positive iff `score >= t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confusion {
    pub sensitivity: f64,
    pub specificity: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion_at(samples: &[ScoredSample], threshold: f64) -> Result<Confusion> {
    let (n_pos, n_neg) = validate(samples)?;
    if n_pos == 0 {
        return Err(MetricError::Undefined {
            metric: "sensitivity",
            reason: "no positive samples".into(),
        });
    }
    if n_neg == 0 {
        return Err(MetricError::Undefined {
            metric: "specificity",
            reason: "no negative samples".into(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for s in samples {
        let predicted_pos = s.score >= threshold;
        match (s.label == 1, predicted_pos) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Confusion {
        sensitivity: tp as f64 / (tp + fn_) as f64,
        specificity: tn as f64 / (tn + fp) as f64,
        tp,
        fp,
        tn,
        fn_,
    })
}

/// Assembles the full report at one operating threshold.
pub fn report(samples: &[ScoredSample], threshold: f64) -> Result<MetricsReport> {
    let (n_pos, n_neg) = validate(samples)?;
    require_both_classes("report", n_pos, n_neg)?;
    let confusion = confusion_at(samples, threshold)?;
    Ok(MetricsReport {
        auroc: auroc(samples)?,
        auprc: auprc(samples)?,
        sensitivity: confusion.sensitivity,
        specificity: confusion.specificity,
        threshold,
        n_pos,
        n_neg,
        auprc_estimator: "average_precision".into(),
        roc_points: roc_curve(samples)?,
        pr_points: pr_curve(samples)?,
    })
}

/// Writes samples as the `id,score,label` CSV used for external analysis.
pub fn scores_csv(samples: &[ScoredSample]) -> String {
    let mut out = String::from("id,score,label\n");
    for s in samples {
        out.push_str(&format!("{},{},{}\n", s.id, s.score, s.label));
    }
    out
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(scores: &[f64], labels: &[u8]) -> Vec<ScoredSample> {
        scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (&s, &l))| ScoredSample::new(format!("s{i}"), s, l))
            .collect()
    }

    /// Random instance with deliberate ties from a coarse score grid.
    fn random_instance(rng: &mut crate::augment::RngStream) -> Vec<ScoredSample> {
        loop {
            let n = 2 + (rng.next_u64() % 19) as usize;
            let samples: Vec<ScoredSample> = (0..n)
                .map(|i| {
                    let score = (rng.next_u64() % 11) as f64 / 10.0;
                    let label = (rng.next_u64() % 2) as u8;
                    ScoredSample::new(format!("s{i}"), score, label)
                })
                .collect();
            let n_pos = samples.iter().filter(|s| s.label == 1).count();
            if n_pos > 0 && n_pos < samples.len() {
                return samples;
            }
        }
    }

    #[test]
    fn auroc_perfect_separation() {
        let s = set(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]);
        assert_eq!(auroc(&s).unwrap(), 1.0);
    }

    #[test]
    fn auroc_all_tied_is_half() {
        let s = set(&[0.4, 0.4, 0.4, 0.4, 0.4], &[1, 0, 1, 0, 0]);
        assert_eq!(auroc(&s).unwrap(), 0.5);
    }

    #[test]
    fn auroc_matches_pairwise_oracle() {
        let mut rng = crate::augment::rng_for(123, 0, 0);
        for _ in 0..1000 {
            let samples = random_instance(&mut rng);
            let fast = auroc(&samples).unwrap();
            let brute = oracle::auroc_pairwise(&samples);
            assert!(
                (fast - brute).abs() <= 1e-12,
                "fast {fast} vs brute {brute} on {samples:?}"
            );
        }
    }

    #[test]
    fn auroc_rejects_single_class() {
        let s = set(&[0.1, 0.9], &[1, 1]);
        assert!(matches!(
            auroc(&s),
            Err(MetricError::Undefined { metric: "auroc", .. })
        ));
    }

    #[test]
    fn roc_curve_perfect_two_plus_two() {
        let s = set(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]);
        let pts = roc_curve(&s).unwrap();
        assert_eq!(
            pts,
            vec![
                [0.0, 0.0],
                [0.0, 0.5],
                [0.0, 1.0],
                [0.5, 1.0],
                [1.0, 1.0]
            ]
        );
    }

    #[test]
    fn roc_curve_tied_pair() {
        let s = set(&[0.5, 0.5], &[1, 0]);
        let pts = roc_curve(&s).unwrap();
        assert_eq!(pts, vec![[0.0, 0.0], [1.0, 1.0]]);
        assert_eq!(trapezoid_area(&pts), 0.5);
    }

    #[test]
    fn roc_curve_is_monotone() {
        let mut rng = crate::augment::rng_for(5, 0, 0);
        for _ in 0..50 {
            let samples = random_instance(&mut rng);
            let pts = roc_curve(&samples).unwrap();
            for w in pts.windows(2) {
                assert!(w[1][0] >= w[0][0] && w[1][1] >= w[0][1]);
            }
            assert_eq!(pts[0], [0.0, 0.0]);
            assert_eq!(*pts.last().unwrap(), [1.0, 1.0]);
        }
    }

    #[test]
    fn roc_trapezoids_equal_mann_whitney() {
        let mut rng = crate::augment::rng_for(6, 0, 0);
        for _ in 0..200 {
            let samples = random_instance(&mut rng);
            let area = trapezoid_area(&roc_curve(&samples).unwrap());
            assert!((area - auroc(&samples).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn auprc_perfect_separation() {
        let s = set(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]);
        assert_eq!(auprc(&s).unwrap(), 1.0);
    }

    #[test]
    fn auprc_all_tied_equals_prevalence() {
        let s = set(&[0.3; 8], &[1, 0, 0, 1, 0, 0, 0, 0]);
        assert_eq!(auprc(&s).unwrap(), 0.25);
    }

    #[test]
    fn auprc_matches_threshold_oracle() {
        let mut rng = crate::augment::rng_for(321, 0, 0);
        for _ in 0..1000 {
            let samples = random_instance(&mut rng);
            let fast = auprc(&samples).unwrap();
            let brute = oracle::auprc_threshold_enum(&samples);
            assert!(
                (fast - brute).abs() <= 1e-12,
                "fast {fast} vs brute {brute} on {samples:?}"
            );
        }
    }

    #[test]
    fn confusion_thresholds() {
        let s = set(&[0.6, 0.4], &[1, 0]);
        let c = confusion_at(&s, 0.5).unwrap();
        assert_eq!((c.sensitivity, c.specificity), (1.0, 1.0));

        let all_pos = confusion_at(&s, 0.0).unwrap();
        assert_eq!(all_pos.sensitivity, 1.0);

        let none = confusion_at(&s, 0.61).unwrap();
        assert_eq!((none.sensitivity, none.specificity), (0.0, 1.0));
    }

    #[test]
    fn confusion_names_undefined_metric() {
        let s = set(&[0.6, 0.4], &[1, 1]);
        match confusion_at(&s, 0.5) {
            Err(MetricError::Undefined { metric, .. }) => assert_eq!(metric, "specificity"),
            other => panic!("expected undefined specificity, got {other:?}"),
        }
    }

    #[test]
    fn report_perfect_and_inverted() {
        let s = set(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]);
        let r = report(&s, 0.5).unwrap();
        assert_eq!(
            (r.auroc, r.auprc, r.sensitivity, r.specificity),
            (1.0, 1.0, 1.0, 1.0)
        );

        let inverted = set(&[0.9, 0.8, 0.3, 0.2], &[0, 0, 1, 1]);
        assert_eq!(report(&inverted, 0.5).unwrap().auroc, 0.0);
    }

    #[test]
    fn report_matches_individual_ops() {
        let mut rng = crate::augment::rng_for(9, 0, 0);
        let samples = random_instance(&mut rng);
        let r = report(&samples, 0.5).unwrap();
        assert_eq!(r.auroc, auroc(&samples).unwrap());
        assert_eq!(r.auprc, auprc(&samples).unwrap());
        let c = confusion_at(&samples, 0.5).unwrap();
        assert_eq!(r.sensitivity, c.sensitivity);
        assert_eq!(r.specificity, c.specificity);
        assert_eq!(r.roc_points, roc_curve(&samples).unwrap());
    }

    #[test]
    fn report_json_schema_fields() {
        let s = set(&[0.9, 0.2], &[1, 0]);
        let json = serde_json::to_value(report(&s, 0.5).unwrap()).unwrap();
        for key in [
            "auroc",
            "auprc",
            "sensitivity",
            "specificity",
            "threshold",
            "n_pos",
            "n_neg",
            "auprc_estimator",
            "roc",
            "pr",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["auprc_estimator"], "average_precision");
    }

    proptest! {
        /// AUROC only depends on the score ordering.
        #[test]
        fn auroc_invariant_under_monotone_transform(seed in 0u64..500) {
            let mut rng = crate::augment::rng_for(seed, 1, 1);
            let samples = random_instance(&mut rng);
            let transformed: Vec<ScoredSample> = samples
                .iter()
                .map(|s| ScoredSample::new(s.id.clone(), 0.1 + 0.5 * s.score, s.label))
                .collect();
            let a = auroc(&samples).unwrap();
            let b = auroc(&transformed).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        /// Swapping labels mirrors AUROC when scores are unique.
        #[test]
        fn auroc_label_swap(seed in 0u64..500) {
            let mut rng = crate::augment::rng_for(seed, 2, 2);
            let n = 2 + (rng.next_u64() % 15) as usize;
            let mut samples: Vec<ScoredSample> = (0..n)
                .map(|i| {
                    // unique scores: spread by index, jitter within the slot
                    let score = i as f64 + rng.next_f64() * 0.5;
                    ScoredSample::new(format!("s{i}"), score, (rng.next_u64() % 2) as u8)
                })
                .collect();
            samples[0].label = 1;
            samples[1].label = 0;
            let swapped: Vec<ScoredSample> = samples
                .iter()
                .map(|s| ScoredSample::new(s.id.clone(), s.score, 1 - s.label))
                .collect();
            let a = auroc(&samples).unwrap();
            let b = auroc(&swapped).unwrap();
            prop_assert!((a + b - 1.0).abs() <= 1e-12);
        }
    }
}
