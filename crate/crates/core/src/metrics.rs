//! Classification metrics: accuracy, top-3 accuracy and macro-averaged
//! precision, recall and F1.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub top3_accuracy: f64,
    pub f1_macro: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    /// `confusion[i][j]` counts samples of true class `i` predicted as `j`.
    pub confusion: Vec<Vec<u64>>,
}

/// Cell `(i, j)` counts samples with true class `i` predicted `j`.
pub fn confusion_matrix(labels: &[usize], preds: &[usize], k: usize) -> Result<Array2<u64>> {
    if labels.len() != preds.len() {
        return Err(Error::shape(format!("{} labels but {} predictions", labels.len(), preds.len())));
    }
    let mut m = Array2::zeros((k, k));
    for (&y, &p) in labels.iter().zip(preds) {
        if let Some(&bad) = [y, p].iter().find(|&&c| c >= k) {
            return Err(Error::LabelOutOfRange { label: bad, classes: k });
        }
        m[[y, p]] += 1;
    }
    Ok(m)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Whether `class` is among the `k` largest entries of `row`, breaking ties
/// toward the lower index.
pub fn in_top_k(row: &[f64], class: usize, k: usize) -> bool {
    let target = row[class];
    let ahead = row.iter().enumerate().filter(|&(j, &v)| v > target || (v == target && j < class)).count();
    ahead < k
}

/// Per-class `(precision, recall, f1)` with `0/0 = 0`.
pub fn per_class(confusion: &Array2<u64>) -> Vec<(f64, f64, f64)> {
    let k = confusion.nrows();
    (0..k)
        .map(|c| {
            let tp = confusion[[c, c]];
            let predicted: u64 = confusion.column(c).sum();
            let actual: u64 = confusion.row(c).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            (precision, recall, f1)
        })
        .collect()
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Metrics from `n x K` logits. Macro averages run over the classes that
/// occur among the labels or the top-1 predictions.
pub fn compute_metrics(labels: &[usize], logits: &Array2<f64>) -> Result<Metrics> {
    let (n, k) = logits.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("metrics need at least one sample".into()));
    }
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} logit rows", labels.len())));
    }
    let rows: Vec<Vec<f64>> = logits.rows().into_iter().map(|r| r.to_vec()).collect();
    let preds: Vec<usize> = rows.iter().map(|r| argmax(r)).collect();
    let confusion = confusion_matrix(labels, &preds, k)?;
    let correct: u64 = confusion.diag().sum();
    let top3 = labels.iter().zip(&rows).filter(|(&y, r)| in_top_k(r, y, 3)).count();

    let stats = per_class(&confusion);
    let present: Vec<usize> = (0..k).filter(|&c| confusion.row(c).sum() + confusion.column(c).sum() > 0).collect();
    let macro_avg = |f: fn(&(f64, f64, f64)) -> f64| present.iter().map(|&c| f(&stats[c])).sum::<f64>() / present.len() as f64;

    Ok(Metrics {
        accuracy: correct as f64 / n as f64,
        top3_accuracy: top3 as f64 / n as f64,
        precision_macro: macro_avg(|s| s.0),
        recall_macro: macro_avg(|s| s.1),
        f1_macro: macro_avg(|s| s.2),
        confusion: confusion.rows().into_iter().map(|r| r.to_vec()).collect(),
    })
}
