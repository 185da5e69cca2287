use rayon::prelude::*;

use crate::actdata::ActivationRecord;
use crate::error::{Error, Result};

use super::config::TrainConfig;
use super::network::{FeatureSource, LinearNet, Network};
use super::train::{train_network, TrainedProbe};

/// The attention head whose linear probe validated best.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSelection {
    /// 1-based.
    pub layer: usize,
    /// 1-based.
    pub head: usize,
    pub val_auc: Option<f64>,
    pub probe: TrainedProbe,
}

/// Trains one linear probe per `(layer, head)` and keeps the best by
/// validation AUC (ties → lowest layer, then lowest head).
pub fn ah_best_head(train: &[&ActivationRecord], val: &[&ActivationRecord], hyper: &TrainConfig) -> Result<HeadSelection> {
    let first = train.first().ok_or_else(|| Error::Argument("empty training split".into()))?;
    let dims = match &first.head_activations {
        Some(h) if h.ndim() == 3 => h.shape().to_vec(),
        _ => return Err(Error::Unsupported("records carry no head activations".into())),
    };
    if let Some(r) = train.iter().chain(val).find(|r| r.head_activations.as_ref().map(|h| h.shape()) != Some(&dims[..])) {
        return Err(Error::Unsupported(format!(
            "record (prompt {}, response {}) lacks matching head activations",
            r.prompt_id, r.response_id
        )));
    }
    let (n_layers, n_heads, d_head) = (dims[0], dims[1], dims[2]);
    let cells: Vec<(usize, usize)> = (1..=n_layers).flat_map(|l| (1..=n_heads).map(move |h| (l, h))).collect();
    let trained = cells
        .par_iter()
        .map(|&(l, h)| {
            let net = Network::Linear(LinearNet {
                source: FeatureSource::Head(l, h),
                input_width: d_head,
            });
            train_network(net, train, val, hyper)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<HeadSelection> = None;
    for ((l, h), probe) in cells.into_iter().zip(trained) {
        let auc = probe.history.best().and_then(|s| s.val_auc);
        let better = match &best {
            None => true,
            Some(b) => auc.unwrap_or(f64::NEG_INFINITY) > b.val_auc.unwrap_or(f64::NEG_INFINITY),
        };
        if better {
            best = Some(HeadSelection {
                layer: l,
                head: h,
                val_auc: auc,
                probe,
            });
        }
    }
    best.ok_or_else(|| Error::Unsupported("head activations have no heads".into()))
}
