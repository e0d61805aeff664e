//! One-vs-rest confusion counts, derived metrics and rank-based ROC AUC.
//!
//! A metric whose denominator is zero is `None` ("undefined"), never 0.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Per-class one-vs-rest counts over a set of predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub per_class: Vec<ClassCounts>,
    /// Number of samples.
    pub samples: u64,
}

impl ConfusionCounts {
    pub fn from_predictions(labels: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if labels.len() != predicted.len() {
            return Err(Error::shape("one prediction per label required"));
        }
        if let Some(&bad) = labels.iter().chain(predicted).find(|&&c| c >= classes) {
            return Err(Error::Index(format!("class {bad} >= {classes}")));
        }
        let mut per_class = vec![ClassCounts::default(); classes];
        for (&y, &p) in labels.iter().zip(predicted) {
            for (c, counts) in per_class.iter_mut().enumerate() {
                match (y == c, p == c) {
                    (true, true) => counts.tp += 1,
                    (false, true) => counts.fp += 1,
                    (true, false) => counts.fn_ += 1,
                    (false, false) => counts.tn += 1,
                }
            }
        }
        Ok(ConfusionCounts {
            per_class,
            samples: labels.len() as u64,
        })
    }

    /// Build from an externally supplied `(tp, fp, tn, fn)` table.
    pub fn from_table(rows: &[(i64, i64, i64, i64)]) -> Result<Self> {
        let mut per_class = Vec::with_capacity(rows.len());
        for (c, &(tp, fp, tn, fn_)) in rows.iter().enumerate() {
            if [tp, fp, tn, fn_].iter().any(|&v| v < 0) {
                return Err(Error::Domain(format!("negative count for class {c}")));
            }
            per_class.push(ClassCounts {
                tp: tp as u64,
                fp: fp as u64,
                tn: tn as u64,
                fn_: fn_ as u64,
            });
        }
        let samples = per_class.first().map_or(0, |c| c.total());
        if per_class.iter().any(|c| c.total() != samples) {
            return Err(Error::Domain(
                "classes disagree on the number of samples".into(),
            ));
        }
        Ok(ConfusionCounts { per_class, samples })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsSummary {
    /// Fraction of samples whose predicted class is correct.
    pub accuracy: Option<f64>,
    pub per_class: Vec<ClassMetrics>,
    /// Mean over classes where the metric is defined.
    pub macro_avg: ClassMetrics,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn class_metrics(c: &ClassCounts) -> ClassMetrics {
    ClassMetrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        sensitivity: ratio(c.tp, c.tp + c.fn_),
        specificity: ratio(c.tn, c.tn + c.fp),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
    }
}

fn defined_mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn metrics(counts: &ConfusionCounts) -> MetricsSummary {
    let per_class: Vec<ClassMetrics> = counts.per_class.iter().map(class_metrics).collect();
    let correct: u64 = counts.per_class.iter().map(|c| c.tp).sum();
    let macro_avg = ClassMetrics {
        accuracy: defined_mean(per_class.iter().map(|m| m.accuracy)),
        sensitivity: defined_mean(per_class.iter().map(|m| m.sensitivity)),
        specificity: defined_mean(per_class.iter().map(|m| m.specificity)),
        f1: defined_mean(per_class.iter().map(|m| m.f1)),
    };
    MetricsSummary {
        accuracy: ratio(correct, counts.samples),
        per_class,
        macro_avg,
    }
}

/// Mann-Whitney AUC with midranks for ties. `None` unless both a positive
/// and a negative are present.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * order[i..j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// One-vs-rest AUC per class from per-sample class scores.
pub fn roc_auc_per_class(
    scores: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
) -> Vec<Option<f64>> {
    (0..classes)
        .map(|c| {
            let s: Vec<f64> = scores.iter().map(|row| row[c]).collect();
            let pos: Vec<bool> = labels.iter().map(|&y| y == c).collect();
            binary_auc(&s, &pos)
        })
        .collect()
}

/// Like [`roc_auc_per_class`] but fails on the first undefined class.
pub fn roc_auc(scores: &[Vec<f64>], labels: &[usize], classes: usize) -> Result<Vec<f64>> {
    if scores.len() != labels.len() || scores.iter().any(|r| r.len() != classes) {
        return Err(Error::shape("one score per class per sample required"));
    }
    roc_auc_per_class(scores, labels, classes)
        .into_iter()
        .enumerate()
        .map(|(class, auc)| {
            auc.ok_or(Error::UndefinedAuc {
                class,
                reason: "needs at least one positive and one negative sample",
            })
        })
        .collect()
}

/// Empirical ROC points `(fpr, tpr)` from the highest threshold down,
/// starting at `(0, 0)`; tied scores move diagonally.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Vec<(f64, f64)> {
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if positive[order[j]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            j += 1;
        }
        points.push((fp / n_neg, tp / n_pos));
        i = j;
    }
    points
}
