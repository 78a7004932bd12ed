use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hgnn::argmax;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: usize,
    pub predicted: usize,
    /// Zero when the class is never predicted.
    pub precision: f64,
    /// Zero when the class is absent from the test set.
    pub recall: f64,
    pub f1: f64,
}

/// Metrics of one test set. Classes absent from it are skipped in the macro averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Macro one-vs-rest AUC; `None` when fewer than two classes are present.
    pub auc: Option<f64>,
    pub macro_f1: f64,
    pub micro_f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
    pub present_classes: Vec<usize>,
}

const ROW_SUM_TOLERANCE: f64 = 1e-6;

pub fn metrics<S: Scalar>(probs: ArrayView2<'_, S>, labels: &[usize]) -> Result<Metrics> {
    let (n, p) = probs.dim();
    if n == 0 {
        return Err(Error::Precondition("empty test set".into()));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} probability rows but {} labels", labels.len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= p) {
        return Err(Error::Precondition(format!("label {y} outside {p} classes")));
    }
    for (i, row) in probs.outer_iter().enumerate() {
        let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
        if row.iter().any(|v| !v.is_finite() || *v < S::zero()) || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::Precondition(format!("probability row {i} is not a distribution")));
        }
    }

    let predictions: Vec<usize> = probs.outer_iter().map(|r| argmax(r.iter().copied())).collect();
    let mut confusion = vec![vec![0usize; p]; p];
    for (&y, &yhat) in labels.iter().zip(&predictions) {
        confusion[y][yhat] += 1;
    }
    let correct: usize = (0..p).map(|c| confusion[c][c]).sum();
    let accuracy = correct as f64 / n as f64;

    let mut per_class = Vec::with_capacity(p);
    let mut present = Vec::new();
    let (mut tp_all, mut fp_all, mut fn_all) = (0usize, 0usize, 0usize);
    for c in 0..p {
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        let tp = confusion[c][c];
        let (fp, fn_) = (predicted - tp, support - tp);
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        per_class.push(ClassMetrics {
            class: c,
            support,
            predicted,
            precision: ratio(tp, predicted),
            recall: ratio(tp, support),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
        });
        if support > 0 {
            present.push(c);
        }
    }
    let macro_f1 = present.iter().map(|&c| per_class[c].f1).sum::<f64>() / present.len() as f64;
    let micro_f1 = tp_all as f64 / (tp_all as f64 + 0.5 * (fp_all + fn_all) as f64);

    let auc = if present.len() < 2 {
        None
    } else {
        let total: f64 = present
            .iter()
            .map(|&c| {
                let scores: Vec<f64> = probs.column(c).iter().map(|v| v.as_f64()).collect();
                let positive: Vec<bool> = labels.iter().map(|&y| y == c).collect();
                binary_auc(&scores, &positive)
            })
            .sum();
        Some(total / present.len() as f64)
    };

    Ok(Metrics {
        accuracy,
        auc,
        macro_f1,
        micro_f1,
        confusion,
        per_class,
        present_classes: present,
    })
}

/// Rank-sum AUC with tied scores sharing their average rank.
/// Requires at least one positive and one negative.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let n_pos = positive.iter().filter(|&&b| b).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &b)| b).map(|(r, _)| r).sum();
    (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}
