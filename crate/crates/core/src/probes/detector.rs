use crate::actdata::ActivationRecord;
use crate::error::{Error, Result};

use super::config::ProbeKind;
use super::entropy::pe_score;
use super::suite::{LayerProbeSuite, SelectionMode};
use super::train::{score_records, TrainedProbe};

/// Anything that assigns a hallucination score to a record. Higher scores
/// mean more likely hallucinated.
#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Network(TrainedProbe),
    Suite(LayerProbeSuite, SelectionMode),
    PredictiveEntropy,
}

impl Detector {
    pub fn kind(&self) -> ProbeKind {
        match self {
            Detector::Network(p) => p.net.kind(),
            Detector::Suite(..) => ProbeKind::LayerSuite,
            Detector::PredictiveEntropy => ProbeKind::PredictiveEntropy,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Detector::Suite(_, mode) => format!("suite_{}", mode.name()),
            other => other.kind().label(),
        }
    }

    /// Checks that records have the shape the detector was trained on.
    pub fn check_compatible(&self, record: &ActivationRecord) -> Result<()> {
        let probe = match self {
            Detector::Network(p) => p,
            Detector::Suite(s, _) => s.probes.first().ok_or_else(|| Error::State("suite is untrained".into()))?,
            Detector::PredictiveEntropy => return Ok(()),
        };
        probe.net.features(record).map(|_| ()).map_err(|e| match e {
            Error::Shape(m) => Error::Incompatible(m),
            other => other,
        })
    }

    pub fn score(&self, records: &[&ActivationRecord]) -> Result<Vec<f64>> {
        if let Some(r) = records.first() {
            self.check_compatible(r)?;
        }
        match self {
            Detector::Network(p) => score_records(p, records),
            Detector::Suite(s, mode) => Ok(s.predict_many(*mode, records)?.into_iter().map(|p| p.score).collect()),
            Detector::PredictiveEntropy => records
                .iter()
                .map(|r| {
                    let lp = r.token_logprobs.as_deref().ok_or_else(|| {
                        Error::Unsupported(format!(
                            "record (prompt {}, response {}) has no token log-probabilities",
                            r.prompt_id, r.response_id
                        ))
                    })?;
                    pe_score(lp)
                })
                .collect(),
        }
    }
}
