use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actdata::ActivationRecord;
use crate::error::{Error, Result};
use crate::numcore::{init, BoundParams, DenseArray, Encoder, Graph, NodeId, ParamSet, Scalar};

use super::config::{ClapConfig, TrainConfig};
use super::network::Network;
use super::train::{logits, train_network, TrainedProbe};

const CLS_STD: f32 = 0.02;

/// Cross-layer attention probe: every layer activation becomes one token,
/// a CLS token is prepended and a transformer encoder mixes them. The CLS
/// output feeds a linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClapNet {
    pub config: ClapConfig,
    #[serde(rename = "L")]
    pub n_layers: usize,
    pub d_llm: usize,
}

impl ClapNet {
    pub fn new(config: ClapConfig, n_layers: usize, d_llm: usize) -> Result<Self> {
        if n_layers == 0 || d_llm == 0 {
            return Err(Error::Config(format!("bad activation shape {n_layers}×{d_llm}")));
        }
        config.validate(d_llm)?;
        Ok(Self {
            config,
            n_layers,
            d_llm,
        })
    }

    pub fn width(&self) -> usize {
        self.config.effective_width(self.d_llm)
    }

    fn encoder(&self) -> Result<Encoder> {
        Encoder::new(self.config.encoder_config(self.d_llm), "enc")
    }

    /// Exact number of trainable scalars.
    pub fn param_count(&self) -> usize {
        let d = self.width();
        let proj = if self.config.use_projection {
            self.d_llm * d + d
        } else {
            0
        };
        let pos = if self.config.positional_embeddings {
            (self.n_layers + 1) * d
        } else {
            0
        };
        let enc = self.config.n_enc * self.config.encoder_config(self.d_llm).params_per_layer();
        proj + d + pos + enc + d + 1
    }

    pub(crate) fn init_params(&self, rng: &mut ChaCha8Rng, p: &mut ParamSet<f32>) -> Result<()> {
        let d = self.width();
        if self.config.use_projection {
            p.insert("proj.w", init::linear_weight(rng, self.d_llm, d))?;
            p.insert("proj.b", DenseArray::zeros(&[d]))?;
        }
        p.insert("cls", init::normal(rng, &[d], CLS_STD))?;
        if self.config.positional_embeddings {
            p.insert("pos", init::normal(rng, &[self.n_layers + 1, d], CLS_STD))?;
        }
        self.encoder()?.init_params(rng, p)?;
        p.insert("head.w", init::linear_weight(rng, d, 1))?;
        p.insert("head.b", DenseArray::zeros(&[1]))?;
        debug_assert_eq!(p.num_elements(), self.param_count());
        Ok(())
    }

    pub(crate) fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams<'_, T>,
        x: NodeId,
        batch: usize,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<NodeId> {
        let tokens = if self.config.use_projection {
            let y = g.matmul(x, p.id("proj.w")?)?;
            g.add_bias(y, p.id("proj.b")?)?
        } else {
            x
        };
        let pos = if self.config.positional_embeddings {
            Some(p.id("pos")?)
        } else {
            None
        };
        let seq = g.prepend_cls(tokens, p.id("cls")?, pos, self.n_layers)?;
        let t = self.n_layers + 1;
        let enc = self.encoder()?.apply(g, p, seq, t, dropout_rng)?;
        let cls_out = g.select_rows(enc, (0..batch).map(|b| b * t).collect())?;
        let y = g.matmul(cls_out, p.id("head.w")?)?;
        g.add_bias(y, p.id("head.b")?)
    }
}

/// Trains a CLAP probe; splits must share one `(L, d_LLM)`.
pub fn clap_train(
    train: &[&ActivationRecord],
    val: &[&ActivationRecord],
    config: &ClapConfig,
    hyper: &TrainConfig,
) -> Result<TrainedProbe> {
    let first = train.first().ok_or_else(|| Error::Argument("empty training split".into()))?;
    let (l, d) = first.activations.dims2()?;
    train_network(Network::Clap(ClapNet::new(*config, l, d)?), train, val, hyper)
}

/// Raw logits for a batch of `L × d_LLM` activation blocks.
pub fn clap_forward(probe: &TrainedProbe, acts: &[&DenseArray<f32>]) -> Result<Vec<f64>> {
    if !matches!(probe.net, Network::Clap(_)) {
        return Err(Error::Config(format!("expected a CLAP probe, got {}", probe.net.kind().label())));
    }
    let (rows, width) = probe.net.input_layout();
    let mut data = Vec::with_capacity(acts.len() * rows * width);
    for a in acts {
        if a.shape() != [rows, width] {
            return Err(Error::Config(format!("activations {:?}, probe expects [{rows}, {width}]", a.shape())));
        }
        data.extend_from_slice(a.data());
    }
    logits(&probe.net, &probe.params, data, acts.len())
}
