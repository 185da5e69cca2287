use serde::{Deserialize, Serialize};

use crate::actdata::BatchingStrategy;
use crate::error::{Error, Result};
use crate::numcore::{AdamWConfig, EncoderConfig, LrSchedule};

/// Architecture of the cross-layer attention probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClapConfig {
    pub d_model: usize,
    pub n_enc: usize,
    pub n_heads: usize,
    /// Feed-forward width; `None` means 4·d_model.
    pub ffn_width: Option<usize>,
    /// Without projection the encoder runs on raw activations (d_model = d_LLM).
    pub use_projection: bool,
    pub positional_embeddings: bool,
    pub dropout: f64,
}

impl Default for ClapConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            n_enc: 1,
            n_heads: 4,
            ffn_width: None,
            use_projection: true,
            positional_embeddings: true,
            dropout: 0.0,
        }
    }
}

impl ClapConfig {
    /// Width the encoder actually runs at.
    pub fn effective_width(&self, d_llm: usize) -> usize {
        if self.use_projection {
            self.d_model
        } else {
            d_llm
        }
    }

    pub fn encoder_config(&self, d_llm: usize) -> EncoderConfig {
        let d = self.effective_width(d_llm);
        EncoderConfig {
            d_model: d,
            n_layers: self.n_enc,
            n_heads: self.n_heads,
            ffn_width: self.ffn_width.unwrap_or(4 * d),
            dropout: self.dropout,
            ln_eps: 1e-5,
        }
    }

    pub fn validate(&self, d_llm: usize) -> Result<()> {
        if self.use_projection && self.d_model == 0 {
            return Err(Error::Config("d_model must be at least 1".into()));
        }
        if self.n_enc == 0 {
            return Err(Error::Config("n_enc must be at least 1".into()));
        }
        self.encoder_config(d_llm).validate()
    }
}

/// Which probe a checkpoint or score table came from. Layers are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Clap,
    LpLayer(usize),
    NlpLayer(usize),
    Maxpool,
    ProjectConcat,
    LayerSuite,
    AttentionHead,
    PredictiveEntropy,
}

impl ProbeKind {
    pub fn label(&self) -> String {
        match self {
            ProbeKind::Clap => "clap".into(),
            ProbeKind::LpLayer(l) => format!("lp_layer{l}"),
            ProbeKind::NlpLayer(l) => format!("nlp_layer{l}"),
            ProbeKind::Maxpool => "maxpool".into(),
            ProbeKind::ProjectConcat => "project_concat".into(),
            ProbeKind::LayerSuite => "layer_suite".into(),
            ProbeKind::AttentionHead => "attention_head".into(),
            ProbeKind::PredictiveEntropy => "predictive_entropy".into(),
        }
    }
}

impl std::str::FromStr for ProbeKind {
    type Err = Error;

    /// Parses the names produced by [`ProbeKind::label`].
    fn from_str(s: &str) -> Result<Self> {
        let layer = |rest: &str| {
            rest.parse::<usize>()
                .ok()
                .filter(|&l| l >= 1)
                .ok_or_else(|| Error::Config(format!("bad layer in probe kind {s:?}")))
        };
        Ok(match s {
            "clap" => ProbeKind::Clap,
            "maxpool" => ProbeKind::Maxpool,
            "project_concat" => ProbeKind::ProjectConcat,
            "layer_suite" => ProbeKind::LayerSuite,
            "attention_head" => ProbeKind::AttentionHead,
            "predictive_entropy" => ProbeKind::PredictiveEntropy,
            _ => {
                if let Some(rest) = s.strip_prefix("lp_layer") {
                    ProbeKind::LpLayer(layer(rest)?)
                } else if let Some(rest) = s.strip_prefix("nlp_layer") {
                    ProbeKind::NlpLayer(layer(rest)?)
                } else {
                    return Err(Error::Config(format!("unknown probe kind {s:?}")));
                }
            }
        })
    }
}

/// Optimization settings shared by every trainable probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub warmup_epochs: usize,
    pub max_epochs: usize,
    pub adamw: AdamWConfig,
    pub batching: BatchingStrategy,
    pub seed: u64,
    /// Stop after this many epochs past the warmup without a validation
    /// improvement. `None` always runs `max_epochs`.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            batch_size: 128,
            warmup_epochs: 5,
            max_epochs: 50,
            adamw: AdamWConfig::default(),
            batching: BatchingStrategy::PromptWise,
            seed: 0,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            peak_lr: self.lr,
            warmup_epochs: self.warmup_epochs,
            max_epochs: self.max_epochs,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}
