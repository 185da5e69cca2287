use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub prompt_id: u64,
    pub response_id: u32,
    pub score: f64,
    pub label: u8,
}

/// Detector scores with ground-truth labels (1 = hallucination).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreTable {
    pub probe: String,
    pub dataset: String,
    pub seed: Option<u64>,
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn from_scores(scores: &[f64], labels: &[u8]) -> Self {
        Self {
            rows: scores
                .iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (&score, &label))| ScoreRow {
                    prompt_id: i as u64,
                    response_id: 0,
                    score,
                    label,
                })
                .collect(),
            ..Default::default()
        }
    }

    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.score).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("prompt_id,response_id,score,label\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.prompt_id, r.response_id, r.score, r.label));
        }
        out
    }
}

/// Mann–Whitney AUC with hallucination as the positive class: the fraction
/// of (positive, negative) pairs the scores order correctly, ties counting ½.
pub fn auc(table: &ScoreTable) -> Result<f64> {
    auc_scores(&table.scores(), &table.labels())
}

pub fn auc_scores(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Argument(format!("label {bad} is not binary")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Argument("scores must be finite".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // Walk tie groups in ascending score order; each positive beats every
    // negative seen in earlier groups and ties with the negatives in its own.
    let mut negatives_below = 0u64;
    let mut doubled = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let pos = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        let neg = (j - i) as u64 - pos;
        doubled += pos * (2 * negatives_below + neg);
        negatives_below += neg;
        i = j;
    }
    Ok(doubled as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(auc_scores(&[0.9, 0.8, 0.3], &[1, 1, 0]).unwrap(), 1.0);
        assert_eq!(auc_scores(&[0.2, 0.8], &[1, 0]).unwrap(), 0.0);
        assert_eq!(auc_scores(&[0.5, 0.5, 0.5], &[1, 0, 1]).unwrap(), 0.5);
        assert!(matches!(auc_scores(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn known_value() {
        let s = auc_scores(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
        assert!((s - 0.75).abs() < 1e-12);
    }
}
