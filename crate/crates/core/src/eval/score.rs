use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Label;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("gold has {gold} labels but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
}

/// Micro precision, recall and F1 over positive labels, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positive: usize,
    pub predicted_positive: usize,
    pub gold_positive: usize,
    pub n_queries: usize,
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_from(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

impl ScoreReport {
    pub fn from_counts(true_positive: usize, predicted_positive: usize, gold_positive: usize, n_queries: usize) -> Self {
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let precision = pct(true_positive, predicted_positive);
        let recall = pct(true_positive, gold_positive);
        Self {
            precision,
            recall,
            f1: f1_from(precision, recall),
            true_positive,
            predicted_positive,
            gold_positive,
            n_queries,
        }
    }

    /// Pool the counts of several reports.
    pub fn merge<'a>(reports: impl IntoIterator<Item = &'a ScoreReport>) -> Self {
        let (mut tp, mut pp, mut gp, mut n) = (0, 0, 0, 0);
        for r in reports {
            tp += r.true_positive;
            pp += r.predicted_positive;
            gp += r.gold_positive;
            n += r.n_queries;
        }
        Self::from_counts(tp, pp, gp, n)
    }
}

/// Score aligned gold and predicted labels; `no_relation` is never a positive.
pub fn score(gold: &[Label], pred: &[Label]) -> Result<ScoreReport, ScoreError> {
    if gold.len() != pred.len() {
        return Err(ScoreError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    Ok(score_pairs(gold.iter().zip(pred)))
}

pub fn score_pairs<'a>(pairs: impl IntoIterator<Item = (&'a Label, &'a Label)>) -> ScoreReport {
    let (mut tp, mut pp, mut gp, mut n) = (0, 0, 0, 0);
    for (g, p) in pairs {
        n += 1;
        if p.is_positive() {
            pp += 1;
            if p == g {
                tp += 1;
            }
        }
        if g.is_positive() {
            gp += 1;
        }
    }
    ScoreReport::from_counts(tp, pp, gp, n)
}
