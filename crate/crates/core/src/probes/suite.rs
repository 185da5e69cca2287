use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actdata::ActivationRecord;
use crate::error::{Error, Result};

use super::config::TrainConfig;
use super::network::lp_train;
use super::train::{score_records, TrainedProbe};

/// How a layer suite turns `L` per-layer scores into one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Probe on the last layer.
    Last,
    /// Probe with the best in-distribution validation AUC.
    Ma,
    /// Probe with the lowest binary entropy for this record.
    Mc,
    /// Majority of the thresholded per-layer labels.
    Mv,
}

impl SelectionMode {
    pub const ALL: [SelectionMode; 4] = [SelectionMode::Last, SelectionMode::Ma, SelectionMode::Mc, SelectionMode::Mv];

    pub fn name(self) -> &'static str {
        match self {
            SelectionMode::Last => "last",
            SelectionMode::Ma => "ma",
            SelectionMode::Mc => "mc",
            SelectionMode::Mv => "mv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuitePrediction {
    /// Probability for Last/MA/MC, vote fraction for MV.
    pub score: f64,
    pub label: u8,
    /// 1-based layer whose probe decided, when a single probe did.
    pub layer: Option<usize>,
}

/// `−p ln p − (1−p) ln(1−p)`, with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// 0-based index of the lowest-entropy probability; ties go to the lower index.
pub fn most_confident(probs: &[f64]) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::Argument("no probe outputs".into()));
    }
    let mut best = 0;
    let mut best_h = binary_entropy(probs[0]);
    for (i, &p) in probs.iter().enumerate().skip(1) {
        let h = binary_entropy(p);
        if h < best_h {
            best = i;
            best_h = h;
        }
    }
    Ok(best)
}

/// Majority of `p ≥ 0.5` votes; an even split counts as hallucination.
/// Returns the label and the fraction of probes voting 1.
pub fn majority_vote(probs: &[f64]) -> Result<(u8, f64)> {
    if probs.is_empty() {
        return Err(Error::Argument("no probe outputs".into()));
    }
    let ones = probs.iter().filter(|&&p| p >= 0.5).count();
    let frac = ones as f64 / probs.len() as f64;
    Ok((u8::from(2 * ones >= probs.len()), frac))
}

/// One logistic-regression probe per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerProbeSuite {
    pub probes: Vec<TrainedProbe>,
    /// Best validation AUC of each layer's probe.
    pub val_auc: Vec<Option<f64>>,
    /// 1-based MA layer, fixed from in-distribution validation.
    pub ma_layer: usize,
}

impl LayerProbeSuite {
    /// Trains all `L` probes in parallel.
    pub fn train(train: &[&ActivationRecord], val: &[&ActivationRecord], hyper: &TrainConfig) -> Result<Self> {
        let first = train.first().ok_or_else(|| Error::Argument("empty training split".into()))?;
        let (n_layers, _) = first.activations.dims2()?;
        let probes = (1..=n_layers)
            .into_par_iter()
            .map(|l| lp_train(train, val, l, hyper))
            .collect::<Result<Vec<_>>>()?;
        let val_auc = probes.iter().map(|p| p.history.best().and_then(|s| s.val_auc)).collect();
        Self::from_probes(probes, val_auc)
    }

    pub fn from_probes(probes: Vec<TrainedProbe>, val_auc: Vec<Option<f64>>) -> Result<Self> {
        if probes.is_empty() || probes.len() != val_auc.len() {
            return Err(Error::State(format!(
                "suite needs one probe and one validation AUC per layer ({} vs {})",
                probes.len(),
                val_auc.len()
            )));
        }
        let mut ma = 0;
        for (i, a) in val_auc.iter().enumerate() {
            if a.unwrap_or(f64::NEG_INFINITY) > val_auc[ma].unwrap_or(f64::NEG_INFINITY) {
                ma = i;
            }
        }
        Ok(Self {
            probes,
            val_auc,
            ma_layer: ma + 1,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.probes.len()
    }

    /// `scores[i][l]` is layer `l+1`'s probability for record `i`.
    pub fn layer_scores(&self, records: &[&ActivationRecord]) -> Result<Vec<Vec<f64>>> {
        if self.probes.is_empty() {
            return Err(Error::State("suite is untrained".into()));
        }
        let per_layer = self
            .probes
            .par_iter()
            .map(|p| score_records(p, records))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..records.len())
            .map(|i| per_layer.iter().map(|s| s[i]).collect())
            .collect())
    }

    pub fn combine(&self, mode: SelectionMode, probs: &[f64]) -> Result<SuitePrediction> {
        if probs.len() != self.n_layers() {
            return Err(Error::Shape(format!("{} scores for {} layers", probs.len(), self.n_layers())));
        }
        let single = |l: usize| SuitePrediction {
            score: probs[l - 1],
            label: u8::from(probs[l - 1] >= 0.5),
            layer: Some(l),
        };
        Ok(match mode {
            SelectionMode::Last => single(self.n_layers()),
            SelectionMode::Ma => single(self.ma_layer),
            SelectionMode::Mc => single(most_confident(probs)? + 1),
            SelectionMode::Mv => {
                let (label, frac) = majority_vote(probs)?;
                SuitePrediction {
                    score: frac,
                    label,
                    layer: None,
                }
            }
        })
    }

    pub fn predict_many(&self, mode: SelectionMode, records: &[&ActivationRecord]) -> Result<Vec<SuitePrediction>> {
        self.layer_scores(records)?
            .iter()
            .map(|p| self.combine(mode, p))
            .collect()
    }
}

pub fn suite_predict(suite: &LayerProbeSuite, mode: SelectionMode, record: &ActivationRecord) -> Result<SuitePrediction> {
    let scores = suite.layer_scores(&[record])?;
    suite.combine(mode, &scores[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_values() {
        assert!((binary_entropy(0.5) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
    }

    #[test]
    fn mc_picks_sharpest_probe() {
        assert_eq!(most_confident(&[0.5, 0.99, 0.6]).unwrap(), 1);
        assert_eq!(most_confident(&[0.9, 0.1]).unwrap(), 0);
    }

    #[test]
    fn mv_majority_and_tie() {
        assert_eq!(majority_vote(&[0.9, 0.8, 0.1]).unwrap().0, 1);
        assert_eq!(majority_vote(&[0.9, 0.1]).unwrap().0, 1);
        assert_eq!(majority_vote(&[0.2, 0.1, 0.7]).unwrap().0, 0);
    }

    #[test]
    fn untrained_suite_is_state_error() {
        let suite = LayerProbeSuite {
            probes: Vec::new(),
            val_auc: Vec::new(),
            ma_layer: 1,
        };
        assert!(matches!(suite.layer_scores(&[]), Err(Error::State(_))));
        assert!(matches!(LayerProbeSuite::from_probes(Vec::new(), Vec::new()), Err(Error::State(_))));
    }
}
