use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actdata::{make_batches, ActivationRecord};
use crate::error::{Error, Result};
use crate::metrics::auc_scores;
use crate::numcore::{adamw_step, lr_at, DenseArray, Graph, OptimState, ParamSet};

use super::config::TrainConfig;
use super::network::Network;

/// Records per scoring graph.
const SCORE_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub param_count: usize,
}

impl History {
    pub fn best(&self) -> Option<&EpochStats> {
        let e = self.best_epoch?;
        self.epochs.iter().find(|s| s.epoch == e)
    }
}

/// A network with fitted parameters. Immutable once trained and safe to
/// share across scoring threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedProbe {
    pub net: Network,
    pub params: ParamSet<f32>,
    pub history: History,
}

fn stack(net: &Network, records: &[&ActivationRecord]) -> Result<Vec<f32>> {
    let (rows, width) = net.input_layout();
    let mut out = Vec::with_capacity(records.len() * rows * width);
    for r in records {
        out.extend(net.features(r)?);
    }
    Ok(out)
}

/// Forward pass over `n` stacked inputs, returning raw logits.
pub fn logits(net: &Network, params: &ParamSet<f32>, data: Vec<f32>, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let (rows, width) = net.input_layout();
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let x = g.leaf(DenseArray::from_vec(&[n * rows, width], data)?);
    let out = net.forward(&mut g, &bound, x, n, None)?;
    Ok(g.value(out).data().iter().map(|&z| f64::from(z)).collect())
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn bce(z: f64, y: u8) -> f64 {
    z.max(0.0) - z * f64::from(y) + (-z.abs()).exp().ln_1p()
}

fn chunk_logits(net: &Network, params: &ParamSet<f32>, records: &[&ActivationRecord]) -> Result<Vec<f64>> {
    let parts: Vec<Vec<f64>> = records
        .par_chunks(SCORE_CHUNK)
        .map(|chunk| logits(net, params, stack(net, chunk)?, chunk.len()))
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

/// Hallucination scores `sigmoid(logit)` in record order.
pub fn score_records(probe: &TrainedProbe, records: &[&ActivationRecord]) -> Result<Vec<f64>> {
    Ok(chunk_logits(&probe.net, &probe.params, records)?
        .into_iter()
        .map(sigmoid)
        .collect())
}

struct Snapshot {
    epoch: usize,
    auc: Option<f64>,
    loss: f64,
    params: ParamSet<f32>,
}

impl Snapshot {
    /// Higher validation AUC wins; validation loss decides when AUC is undefined.
    fn beaten_by(&self, auc: Option<f64>, loss: f64) -> bool {
        match (self.auc, auc) {
            (Some(best), Some(new)) => new > best,
            (None, Some(_)) => true,
            (Some(_), None) => false,
            (None, None) => loss < self.loss,
        }
    }
}

/// Runs the shared training loop: prompt-wise (or random) batches, mean BCE,
/// AdamW with the warmup/cosine schedule, and keeps the epoch with the best
/// validation AUC. An empty validation split keeps the final epoch.
pub fn train_network(
    net: Network,
    train: &[&ActivationRecord],
    val: &[&ActivationRecord],
    hyper: &TrainConfig,
) -> Result<TrainedProbe> {
    if train.is_empty() {
        return Err(Error::Argument("empty training split".into()));
    }
    if hyper.max_epochs == 0 {
        return Err(Error::Config("max_epochs must be at least 1".into()));
    }
    let schedule = hyper.schedule();
    let (rows, width) = net.input_layout();
    let feats = train.iter().map(|r| net.features(r)).collect::<Result<Vec<_>>>()?;
    let mut params = net.init_params(hyper.seed)?;
    let mut state = OptimState::new(&params, hyper.adamw);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0xd20f);
    let mut history = History {
        param_count: params.num_elements(),
        ..Default::default()
    };
    let mut best: Option<Snapshot> = None;
    let mut stale = 0usize;

    for epoch in 0..hyper.max_epochs {
        let lr = lr_at(epoch, &schedule)?;
        let batch_seed = hyper.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(epoch as u64);
        let batches = make_batches(train, hyper.batching, hyper.batch_size, batch_seed)?;
        let mut loss_sum = 0.0;
        for batch in &batches {
            let n = batch.len();
            let mut data = Vec::with_capacity(n * rows * width);
            for &i in &batch.indices {
                data.extend_from_slice(&feats[i]);
            }
            let targets = batch.labels(train);
            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            let x = g.leaf(DenseArray::from_vec(&[n * rows, width], data)?);
            let z = net.forward(&mut g, &bound, x, n, Some(&mut dropout_rng))?;
            let loss = g.bce_with_logits(z, &targets)?;
            let loss_value = f64::from(g.value(loss).data()[0]);
            if !loss_value.is_finite() {
                return Err(Error::TrainingAbort { epoch, lr });
            }
            let grads = g.backward(loss)?;
            let ids = bound.ids().to_vec();
            params.zero_grads();
            params.accumulate_from(&ids, &grads);
            adamw_step(&mut params, &mut state, lr).map_err(|e| match e {
                Error::NonFinite { .. } => Error::TrainingAbort { epoch, lr },
                other => other,
            })?;
            loss_sum += loss_value * n as f64;
        }
        let train_loss = loss_sum / train.len() as f64;

        let (val_loss, val_auc) = if val.is_empty() {
            (None, None)
        } else {
            let z = chunk_logits(&net, &params, val)?;
            let loss = z.iter().zip(val).map(|(&z, r)| bce(z, r.label)).sum::<f64>() / val.len() as f64;
            let labels: Vec<u8> = val.iter().map(|r| r.label).collect();
            let scores: Vec<f64> = z.iter().copied().map(sigmoid).collect();
            (Some(loss), auc_scores(&scores, &labels).ok())
        };
        debug!("epoch {epoch} lr {lr:.3e} train_loss {train_loss:.4} val_auc {val_auc:?}");
        history.epochs.push(EpochStats {
            epoch,
            lr,
            train_loss,
            val_loss,
            val_auc,
        });

        let improved = match (&best, val_loss) {
            (_, None) => true,
            (None, Some(_)) => true,
            (Some(b), Some(loss)) => b.beaten_by(val_auc, loss),
        };
        if improved {
            best = Some(Snapshot {
                epoch,
                auc: val_auc,
                loss: val_loss.unwrap_or(train_loss),
                params: params.clone(),
            });
            stale = 0;
        } else {
            stale += 1;
        }
        if let Some(p) = hyper.patience {
            if epoch + 1 >= hyper.warmup_epochs && stale >= p {
                info!("early stop at epoch {epoch}");
                break;
            }
        }
    }

    let mut best = best.ok_or_else(|| Error::State("training produced no epochs".into()))?;
    best.params.zero_grads();
    history.best_epoch = Some(best.epoch);
    Ok(TrainedProbe {
        net,
        params: best.params,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::network::{FeatureSource, LinearNet};

    fn record(prompt_id: u64, label: u8, x: Vec<f32>) -> ActivationRecord {
        let d = x.len();
        ActivationRecord {
            prompt_id,
            response_id: 0,
            label,
            activations: DenseArray::from_vec(&[1, d], x).unwrap(),
            token_logprobs: None,
            head_activations: None,
            response_text: None,
        }
    }

    fn linear(d: usize) -> Network {
        Network::Linear(LinearNet {
            source: FeatureSource::Layer(1),
            input_width: d,
        })
    }

    #[test]
    fn memorizes_single_example() {
        let r = record(0, 1, vec![1.0, -0.5, 2.0]);
        let hyper = TrainConfig {
            lr: 0.5,
            max_epochs: 50,
            ..Default::default()
        };
        let probe = train_network(linear(3), &[&r], &[], &hyper).unwrap();
        let last = probe.history.epochs.last().unwrap();
        assert!(last.train_loss < 0.01, "{}", last.train_loss);
        assert_eq!(probe.history.best_epoch, Some(49));
    }

    #[test]
    fn scores_in_unit_interval_and_deterministic() {
        let recs: Vec<_> = (0..40)
            .map(|i| record(i, (i % 2) as u8, vec![(i % 2) as f32 * 3.0 - 1.5, (i as f32).sin()]))
            .collect();
        let refs: Vec<&_> = recs.iter().collect();
        let hyper = TrainConfig {
            lr: 0.05,
            max_epochs: 8,
            batch_size: 8,
            ..Default::default()
        };
        let a = train_network(linear(2), &refs[..30], &refs[30..], &hyper).unwrap();
        let b = train_network(linear(2), &refs[..30], &refs[30..], &hyper).unwrap();
        assert_eq!(a.params, b.params);
        let s = score_records(&a, &refs).unwrap();
        assert!(s.iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(a.history.epochs.len(), 8);
    }

    #[test]
    fn exploding_lr_aborts_with_epoch() {
        let recs: Vec<_> = (0..16).map(|i| record(i, (i % 2) as u8, vec![1e30, -1e30])).collect();
        let refs: Vec<&_> = recs.iter().collect();
        let hyper = TrainConfig {
            lr: 1e30,
            max_epochs: 10,
            ..Default::default()
        };
        match train_network(linear(2), &refs, &[], &hyper) {
            Err(Error::TrainingAbort { epoch, .. }) => assert!(epoch < 10),
            other => panic!("expected abort, got {other:?}"),
        }
    }
}
