use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actdata::ActivationRecord;
use crate::error::{Error, Result};
use crate::numcore::{init, BoundParams, DenseArray, Graph, NodeId, ParamSet, Scalar};

use super::clap::ClapNet;
use super::config::{ProbeKind, TrainConfig};
use super::train::{score_records, train_network, TrainedProbe};

/// The single activation vector a per-record probe reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// 1-based layer.
    Layer(usize),
    /// Element-wise max over all layers.
    Maxpool,
    /// 1-based (layer, head) of the head activations.
    Head(usize, usize),
}

/// Element-wise maximum over the layer axis of an `L × d` block.
pub fn maxpool_features(acts: &DenseArray<f32>) -> Result<Vec<f32>> {
    let (l, d) = acts.dims2()?;
    if l == 0 {
        return Err(Error::Shape("no layers to pool".into()));
    }
    let mut out = acts.row(0).to_vec();
    for r in 1..l {
        for (o, &x) in out.iter_mut().zip(acts.row(r)) {
            *o = o.max(x);
        }
    }
    debug_assert_eq!(out.len(), d);
    Ok(out)
}

impl FeatureSource {
    pub fn width(&self, d_llm: usize, d_head: Option<usize>) -> Result<usize> {
        match self {
            FeatureSource::Layer(_) | FeatureSource::Maxpool => Ok(d_llm),
            FeatureSource::Head(..) => d_head.ok_or_else(|| Error::Unsupported("dataset has no head activations".into())),
        }
    }

    pub fn extract(&self, r: &ActivationRecord) -> Result<Vec<f32>> {
        let (n_layers, _) = r.activations.dims2()?;
        match *self {
            FeatureSource::Layer(l) => {
                if !(1..=n_layers).contains(&l) {
                    return Err(Error::Argument(format!("layer {l} outside [1, {n_layers}]")));
                }
                Ok(r.layer(l).to_vec())
            }
            FeatureSource::Maxpool => maxpool_features(&r.activations),
            FeatureSource::Head(l, h) => {
                let heads = r
                    .head_activations
                    .as_ref()
                    .ok_or_else(|| Error::Unsupported("record has no head activations".into()))?;
                let s = heads.shape();
                if !(1..=s[0]).contains(&l) || !(1..=s[1]).contains(&h) {
                    return Err(Error::Argument(format!("head ({l}, {h}) outside {s:?}")));
                }
                let off = ((l - 1) * s[1] + (h - 1)) * s[2];
                Ok(heads.data()[off..off + s[2]].to_vec())
            }
        }
    }
}

/// Logistic regression on one feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearNet {
    pub source: FeatureSource,
    pub input_width: usize,
}

/// ReLU multilayer perceptron on one feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    pub source: FeatureSource,
    pub input_width: usize,
    pub hidden: Vec<usize>,
}

impl MlpNet {
    pub const DEFAULT_HIDDEN: [usize; 3] = [256, 128, 64];
}

/// Shared projection of every layer, concatenated, then a linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectConcatNet {
    pub n_layers: usize,
    pub d_llm: usize,
    pub d_model: usize,
}

impl ProjectConcatNet {
    pub fn feature_len(&self) -> usize {
        self.n_layers * self.d_model
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Network {
    Clap(ClapNet),
    Linear(LinearNet),
    Mlp(MlpNet),
    ProjectConcat(ProjectConcatNet),
}

fn linear_layer<T: Scalar>(g: &mut Graph<T>, p: &BoundParams<'_, T>, x: NodeId, w: &str, b: &str) -> Result<NodeId> {
    let y = g.matmul(x, p.id(w)?)?;
    g.add_bias(y, p.id(b)?)
}

impl Network {
    pub fn kind(&self) -> ProbeKind {
        match self {
            Network::Clap(_) => ProbeKind::Clap,
            Network::Linear(n) => match n.source {
                FeatureSource::Layer(l) => ProbeKind::LpLayer(l),
                FeatureSource::Maxpool => ProbeKind::Maxpool,
                FeatureSource::Head(..) => ProbeKind::AttentionHead,
            },
            Network::Mlp(n) => match n.source {
                FeatureSource::Layer(l) => ProbeKind::NlpLayer(l),
                _ => ProbeKind::NlpLayer(0),
            },
            Network::ProjectConcat(_) => ProbeKind::ProjectConcat,
        }
    }

    /// `(rows per record, row width)` of the stacked input.
    pub fn input_layout(&self) -> (usize, usize) {
        match self {
            Network::Clap(n) => (n.n_layers, n.d_llm),
            Network::Linear(n) => (1, n.input_width),
            Network::Mlp(n) => (1, n.input_width),
            Network::ProjectConcat(n) => (n.n_layers, n.d_llm),
        }
    }

    pub fn features(&self, r: &ActivationRecord) -> Result<Vec<f32>> {
        let (rows, width) = self.input_layout();
        let feats = match self {
            Network::Clap(_) | Network::ProjectConcat(_) => r.activations.data().to_vec(),
            Network::Linear(n) => n.source.extract(r)?,
            Network::Mlp(n) => n.source.extract(r)?,
        };
        if feats.len() != rows * width {
            return Err(Error::Shape(format!(
                "record (prompt {}, response {}) gives {} features, probe expects {rows}×{width}",
                r.prompt_id,
                r.response_id,
                feats.len()
            )));
        }
        Ok(feats)
    }

    pub fn init_params(&self, seed: u64) -> Result<ParamSet<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        match self {
            Network::Clap(n) => n.init_params(&mut rng, &mut p)?,
            Network::Linear(n) => {
                p.insert("w", init::linear_weight(&mut rng, n.input_width, 1))?;
                p.insert("b", DenseArray::zeros(&[1]))?;
            }
            Network::Mlp(n) => {
                let mut fan_in = n.input_width;
                for (i, &h) in n.hidden.iter().enumerate() {
                    p.insert(format!("fc{i}.w"), init::linear_weight(&mut rng, fan_in, h))?;
                    p.insert(format!("fc{i}.b"), DenseArray::zeros(&[h]))?;
                    fan_in = h;
                }
                p.insert("out.w", init::linear_weight(&mut rng, fan_in, 1))?;
                p.insert("out.b", DenseArray::zeros(&[1]))?;
            }
            Network::ProjectConcat(n) => {
                p.insert("proj.w", init::linear_weight(&mut rng, n.d_llm, n.d_model))?;
                p.insert("proj.b", DenseArray::zeros(&[n.d_model]))?;
                p.insert("head.w", init::linear_weight(&mut rng, n.feature_len(), 1))?;
                p.insert("head.b", DenseArray::zeros(&[1]))?;
            }
        }
        Ok(p)
    }

    /// Builds the forward pass for `batch` records stacked in `x`; returns
    /// the `batch × 1` logits.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams<'_, T>,
        x: NodeId,
        batch: usize,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<NodeId> {
        let (rows, width) = self.input_layout();
        if g.value(x).shape() != [batch * rows, width] {
            return Err(Error::Config(format!(
                "input {:?} does not match probe layout {}×{rows}×{width}",
                g.value(x).shape(),
                batch
            )));
        }
        match self {
            Network::Clap(n) => n.forward(g, p, x, batch, dropout_rng),
            Network::Linear(_) => linear_layer(g, p, x, "w", "b"),
            Network::Mlp(n) => {
                let mut h = x;
                for i in 0..n.hidden.len() {
                    h = linear_layer(g, p, h, &format!("fc{i}.w"), &format!("fc{i}.b"))?;
                    h = g.relu(h);
                }
                linear_layer(g, p, h, "out.w", "out.b")
            }
            Network::ProjectConcat(n) => {
                let proj = linear_layer(g, p, x, "proj.w", "proj.b")?;
                let flat = g.reshape(proj, &[batch, n.feature_len()])?;
                linear_layer(g, p, flat, "head.w", "head.b")
            }
        }
    }
}

fn dims_of(records: &[&ActivationRecord]) -> Result<(usize, usize)> {
    records
        .first()
        .ok_or_else(|| Error::Argument("empty training split".into()))?
        .activations
        .dims2()
}

/// Trains a logistic-regression probe on 1-based `layer`.
pub fn lp_train(
    train: &[&ActivationRecord],
    val: &[&ActivationRecord],
    layer: usize,
    hyper: &TrainConfig,
) -> Result<TrainedProbe> {
    let (n_layers, d_llm) = dims_of(train)?;
    if !(1..=n_layers).contains(&layer) {
        return Err(Error::Argument(format!("layer {layer} outside [1, {n_layers}]")));
    }
    let net = Network::Linear(LinearNet {
        source: FeatureSource::Layer(layer),
        input_width: d_llm,
    });
    train_network(net, train, val, hyper)
}

pub fn lp_score(probe: &TrainedProbe, record: &ActivationRecord) -> Result<f64> {
    Ok(score_records(probe, &[record])?[0])
}

/// Trains the non-linear (MLP) probe on 1-based `layer`.
pub fn nlp_train(
    train: &[&ActivationRecord],
    val: &[&ActivationRecord],
    layer: usize,
    hidden: &[usize],
    hyper: &TrainConfig,
) -> Result<TrainedProbe> {
    let (n_layers, d_llm) = dims_of(train)?;
    if !(1..=n_layers).contains(&layer) {
        return Err(Error::Argument(format!("layer {layer} outside [1, {n_layers}]")));
    }
    let net = Network::Mlp(MlpNet {
        source: FeatureSource::Layer(layer),
        input_width: d_llm,
        hidden: hidden.to_vec(),
    });
    train_network(net, train, val, hyper)
}

pub fn project_concat_train(
    train: &[&ActivationRecord],
    val: &[&ActivationRecord],
    d_model: usize,
    hyper: &TrainConfig,
) -> Result<TrainedProbe> {
    let (n_layers, d_llm) = dims_of(train)?;
    if d_model == 0 {
        return Err(Error::Config("d_model must be at least 1".into()));
    }
    let net = Network::ProjectConcat(ProjectConcatNet {
        n_layers,
        d_llm,
        d_model,
    });
    train_network(net, train, val, hyper)
}
