use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::auc::ScoreTable;

/// Unweighted mean of the per-class F1 over {0, 1}. A class with no true or
/// predicted members contributes 0.
pub fn macro_f1(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Argument("macro-F1 of an empty input".into()));
    }
    let mut total = 0.0;
    for class in [0u8, 1] {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&p, &l) in predictions.iter().zip(labels) {
            match (p == class, l == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            total += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(total / 2.0)
}

/// Operating point: scores at or above `value` are classified as
/// hallucinations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub macro_f1: f64,
}

impl Threshold {
    pub fn predict(&self, score: f64) -> u8 {
        u8::from(score >= self.value)
    }
}

/// Picks the macro-F1-maximizing threshold among the midpoints between
/// adjacent distinct scores plus one point below the minimum and one above
/// the maximum. Ties go to the lowest threshold.
pub fn pick_threshold(table: &ScoreTable) -> Result<Threshold> {
    let labels = table.labels();
    let scores = table.scores();
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::UndefinedMetric("threshold selection needs both classes".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Argument("scores must be finite".into()));
    }
    let mut distinct = scores.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut candidates = Vec::with_capacity(distinct.len() + 1);
    candidates.push(distinct[0] - 1.0);
    candidates.extend(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(distinct[distinct.len() - 1] + 1.0);

    let mut best: Option<Threshold> = None;
    let mut preds = vec![0u8; scores.len()];
    for &t in &candidates {
        for (p, &s) in preds.iter_mut().zip(&scores) {
            *p = u8::from(s >= t);
        }
        let f = macro_f1(&preds, &labels)?;
        if best.is_none_or(|b| f > b.macro_f1) {
            best = Some(Threshold { value: t, macro_f1: f });
        }
    }
    best.ok_or_else(|| Error::UndefinedMetric("no threshold candidates".into()))
}
