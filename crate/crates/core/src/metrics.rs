//! Ranking and threshold metrics for multi-label and single-label evaluation.
//!
//! Per-class average precision is the step-wise (interpolation-free) variant:
//! precision is accumulated at the rank of every positive after a stable
//! descending sort of the scores. ROC AUC is the Mann–Whitney statistic with
//! tied pairs counted as one half. Classes that lack positives or negatives
//! are excluded from the macro means and flagged in `valid_class_mask`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::TargetBatch;
use crate::matrix::Matrix;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no positive labels")]
    NoPositives,
    #[error("labels are single-valued; AUC needs at least one positive and one negative")]
    DegenerateClass,
    #[error("length mismatch: {scores} scores, {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("shape mismatch: probabilities are {probs:?}, targets are {targets:?}")]
    ShapeMismatch {
        probs: (usize, usize),
        targets: (usize, usize),
    },
    #[error(
        "single-label evaluation requires exactly one positive per row; row {row} has {positives}"
    )]
    NotSingleLabel { row: usize, positives: usize },
    #[error("class {class} has zero samples")]
    ZeroClass { class: usize },
    #[error("class counts must contain at least one nonzero entry")]
    EmptyCounts,
    #[error("no class has both positive and negative labels")]
    NoValidClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    #[default]
    Multilabel,
    Singlelabel,
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    Ok(())
}

/// Step-wise average precision. Ties keep their original index order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // sort_by is stable, so equal scores stay in index order.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

/// ROC AUC via the rank-sum form of the Mann–Whitney U statistic.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::DegenerateClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of mid-ranks of the positives; ranks are 1-based.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum += mid_rank * pos_in_group as f64;
        start = end;
    }
    let p = n_pos as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * n_neg as f64))
}

/// F1 with predictions `score >= threshold`; 0 when precision + recall is 0.
pub fn f1_at_threshold(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fneg > 0 {
        tp as f64 / (tp + fneg) as f64
    } else {
        0.0
    };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class_ap: Vec<f64>,
    pub per_class_auc: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    pub per_class_n_pos: Vec<u64>,
    pub map: f64,
    pub mauc: f64,
    pub mf1: f64,
    pub accuracy: Option<f64>,
    /// Classes with at least one positive and one negative. Invalid classes
    /// carry 0 in the per-class vectors and do not enter the macro means.
    pub valid_class_mask: Vec<bool>,
    pub threshold: f64,
}

impl MetricReport {
    pub fn n_classes(&self) -> usize {
        self.valid_class_mask.len()
    }

    /// Mean AP over the valid classes among `classes`, `None` if there are none.
    pub fn subset_map(&self, classes: &[usize]) -> Option<f64> {
        let vals: Vec<f64> = classes
            .iter()
            .filter(|&&c| self.valid_class_mask[c])
            .map(|&c| self.per_class_ap[c])
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Writes `class_index,n_pos,ap,auc,f1,valid`.
    pub fn write_per_class_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["class_index", "n_pos", "ap", "auc", "f1", "valid"])?;
        for c in 0..self.n_classes() {
            w.write_record([
                c.to_string(),
                self.per_class_n_pos[c].to_string(),
                self.per_class_ap[c].to_string(),
                self.per_class_auc[c].to_string(),
                self.per_class_f1[c].to_string(),
                self.valid_class_mask[c].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_over(values: &[f64], mask: &[bool]) -> f64 {
    let (sum, n) = values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    sum / n as f64
}

pub fn evaluate(
    probs: &Matrix,
    targets: &TargetBatch,
    mode: LabelMode,
) -> Result<MetricReport, MetricError> {
    evaluate_with_threshold(probs, targets, mode, DEFAULT_THRESHOLD)
}

pub fn evaluate_with_threshold(
    probs: &Matrix,
    targets: &TargetBatch,
    mode: LabelMode,
    threshold: f64,
) -> Result<MetricReport, MetricError> {
    let y = targets.values();
    if probs.shape() != y.shape() {
        return Err(MetricError::ShapeMismatch {
            probs: probs.shape(),
            targets: y.shape(),
        });
    }
    let k = probs.cols();

    let accuracy = match mode {
        LabelMode::Multilabel => None,
        LabelMode::Singlelabel => Some(single_label_accuracy(probs, targets)?),
    };

    let mut report = MetricReport {
        per_class_ap: vec![0.0; k],
        per_class_auc: vec![0.0; k],
        per_class_f1: vec![0.0; k],
        per_class_n_pos: vec![0; k],
        map: 0.0,
        mauc: 0.0,
        mf1: 0.0,
        accuracy,
        valid_class_mask: vec![false; k],
        threshold,
    };
    for c in 0..k {
        let scores = probs.column(c);
        let labels: Vec<bool> = (0..probs.rows())
            .map(|r| targets.is_positive(r, c))
            .collect();
        let n_pos = labels.iter().filter(|&&l| l).count();
        report.per_class_n_pos[c] = n_pos as u64;
        report.per_class_f1[c] = f1_at_threshold(&scores, &labels, threshold);
        if n_pos > 0 {
            report.per_class_ap[c] = average_precision(&scores, &labels)?;
        }
        if n_pos > 0 && n_pos < labels.len() {
            report.per_class_auc[c] = roc_auc(&scores, &labels)?;
            report.valid_class_mask[c] = true;
        }
    }
    if !report.valid_class_mask.iter().any(|&v| v) {
        return Err(MetricError::NoValidClass);
    }
    report.map = mean_over(&report.per_class_ap, &report.valid_class_mask);
    report.mauc = mean_over(&report.per_class_auc, &report.valid_class_mask);
    report.mf1 = mean_over(&report.per_class_f1, &report.valid_class_mask);
    Ok(report)
}

/// Fraction of rows whose arg-max class is the unique positive. Ties in the
/// arg-max resolve to the lowest class index.
fn single_label_accuracy(probs: &Matrix, targets: &TargetBatch) -> Result<f64, MetricError> {
    let mut correct = 0usize;
    for r in 0..probs.rows() {
        let positives: Vec<usize> = (0..probs.cols())
            .filter(|&c| targets.is_positive(r, c))
            .collect();
        if positives.len() != 1 {
            return Err(MetricError::NotSingleLabel {
                row: r,
                positives: positives.len(),
            });
        }
        let row = probs.row(r);
        let argmax = (1..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best });
        if argmax == positives[0] {
            correct += 1;
        }
    }
    Ok(correct as f64 / probs.rows().max(1) as f64)
}

/// Positive-sample counts per class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    counts: Vec<u64>,
}

impl ClassCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self, MetricError> {
        if counts.iter().all(|&c| c == 0) {
            return Err(MetricError::EmptyCounts);
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// The `⌈K/3⌉` classes with the fewest positives, lowest index first on ties.
    pub fn tail_third(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.counts.len()).collect();
        order.sort_by_key(|&c| (self.counts[c], c));
        order.truncate(self.counts.len().div_ceil(3));
        order.sort_unstable();
        order
    }
}

/// `N_max / N_min`.
pub fn imbalance_ratio(counts: &ClassCounts) -> Result<f64, MetricError> {
    if let Some(class) = counts.counts.iter().position(|&c| c == 0) {
        return Err(MetricError::ZeroClass { class });
    }
    let max = *counts.counts.iter().max().expect("nonempty");
    let min = *counts.counts.iter().min().expect("nonempty");
    Ok(max as f64 / min as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x == 1).collect()
    }

    #[test]
    fn ap_examples() {
        assert_eq!(
            average_precision(&[0.9, 0.8, 0.1], &labels(&[1, 1, 0])).unwrap(),
            1.0
        );
        assert_eq!(
            average_precision(&[0.1, 0.9], &labels(&[1, 0])).unwrap(),
            0.5
        );
        assert_eq!(
            average_precision(&[0.9, 0.5, 0.4, 0.2], &labels(&[0, 1, 0, 1])).unwrap(),
            0.5
        );
        assert_eq!(
            average_precision(&[0.3, 0.2], &labels(&[0, 0])),
            Err(MetricError::NoPositives)
        );
    }

    #[test]
    fn ap_ties_follow_index_order() {
        // Positive listed first wins the tie.
        assert_eq!(
            average_precision(&[0.5, 0.5], &labels(&[1, 0])).unwrap(),
            1.0
        );
        assert_eq!(
            average_precision(&[0.5, 0.5], &labels(&[0, 1])).unwrap(),
            0.5
        );
    }

    #[test]
    fn auc_examples() {
        assert_eq!(
            roc_auc(&[0.9, 0.8, 0.2, 0.1], &labels(&[1, 1, 0, 0])).unwrap(),
            1.0
        );
        assert_eq!(roc_auc(&[0.4; 5], &labels(&[1, 0, 1, 0, 0])).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.8, 0.6, 0.4], &labels(&[1, 0, 1])).unwrap(), 0.5);
        assert_eq!(
            roc_auc(&[0.8, 0.6], &labels(&[1, 1])),
            Err(MetricError::DegenerateClass)
        );
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_at_threshold(&[0.9, 0.1], &labels(&[1, 0]), 0.5), 1.0);
        assert_eq!(f1_at_threshold(&[0.2, 0.1], &labels(&[1, 0]), 0.5), 0.0);
        // TP=1, FP=1, FN=1
        assert_eq!(
            f1_at_threshold(&[0.9, 0.8, 0.1], &labels(&[1, 0, 1]), 0.5),
            0.5
        );
    }

    #[test]
    fn imbalance_examples() {
        let uniform = ClassCounts::new(vec![7, 7, 7]).unwrap();
        assert_eq!(imbalance_ratio(&uniform).unwrap(), 1.0);
        assert_eq!(
            imbalance_ratio(&ClassCounts::new(vec![100, 10]).unwrap()).unwrap(),
            10.0
        );
        assert_eq!(
            imbalance_ratio(&ClassCounts::new(vec![5, 0, 2]).unwrap()),
            Err(MetricError::ZeroClass { class: 1 })
        );
        assert_eq!(ClassCounts::new(vec![0, 0]), Err(MetricError::EmptyCounts));
    }

    #[test]
    fn tail_third_picks_rarest() {
        let counts = ClassCounts::new(vec![50, 3, 20, 3, 9, 1, 40]).unwrap();
        // ⌈7/3⌉ = 3
        assert_eq!(counts.tail_third(), vec![1, 3, 5]);
    }

    #[test]
    fn perfect_probs_score_one() {
        let y = Matrix::from_rows(&[
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let probs = y.map(crate::loss::clamp_prob);
        let report =
            evaluate(&probs, &TargetBatch::new(y).unwrap(), LabelMode::Multilabel).unwrap();
        assert_eq!((report.map, report.mauc, report.mf1), (1.0, 1.0, 1.0));
        assert!(report.valid_class_mask.iter().all(|&v| v));
    }

    #[test]
    fn class_without_positives_is_excluded() {
        let y = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let probs = Matrix::from_rows(&[vec![0.9, 0.7], vec![0.2, 0.1], vec![0.4, 0.3]]).unwrap();
        let report =
            evaluate(&probs, &TargetBatch::new(y).unwrap(), LabelMode::Multilabel).unwrap();
        assert_eq!(report.valid_class_mask, vec![true, false]);
        assert_eq!(report.map, report.per_class_ap[0]);
        assert_eq!(report.mauc, 1.0);
        assert!(report.map.is_finite() && report.mf1.is_finite());
    }

    #[test]
    fn single_label_accuracy_and_errors() {
        let y = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let probs = Matrix::from_rows(&[vec![0.7, 0.2], vec![0.6, 0.3], vec![0.1, 0.8]]).unwrap();
        let t = TargetBatch::new(y).unwrap();
        let report = evaluate(&probs, &t, LabelMode::Singlelabel).unwrap();
        assert!((report.accuracy.unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let y2 = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let p2 = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(
            evaluate(&p2, &TargetBatch::new(y2).unwrap(), LabelMode::Singlelabel),
            Err(MetricError::NotSingleLabel {
                row: 0,
                positives: 2
            })
        );
        assert!(matches!(
            evaluate(&p2, &t, LabelMode::Multilabel),
            Err(MetricError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn per_class_csv_schema() {
        let y = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let probs = Matrix::from_rows(&[vec![0.9, 0.2], vec![0.1, 0.8]]).unwrap();
        let report =
            evaluate(&probs, &TargetBatch::new(y).unwrap(), LabelMode::Multilabel).unwrap();
        let mut buf = Vec::new();
        report.write_per_class_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("class_index,n_pos,ap,auc,f1,valid"));
        assert_eq!(lines.next(), Some("0,1,1,1,1,true"));
    }
}
