//! Synthetic datasets with a label-carrying direction planted at exactly one
//! layer (and optionally one attention head). Every other coordinate is
//! i.i.d. Gaussian noise, so a probe restricted to a non-planted layer can do
//! no better than chance.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::DenseArray;

use super::record::{ActivationRecord, Dataset, DatasetManifest, Splits};

/// Head-activation block to attach, with a signal planted at one head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadSignal {
    pub n_heads: usize,
    pub d_head: usize,
    /// 1-based layer of the planted head.
    pub layer: usize,
    /// 1-based head index.
    pub head: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_layers: usize,
    pub d_llm: usize,
    pub n_prompts: usize,
    pub k_samples: u32,
    /// 1-based layer carrying the signal.
    pub signal_layer: usize,
    pub signal_strength: f32,
    pub noise_sigma: f32,
    pub seed: u64,
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub heads: Option<HeadSignal>,
    /// When set, records carry token log-probs and hallucinated responses are
    /// shifted down by this amount.
    pub logprob_shift: Option<f32>,
    /// Seeds the planted direction separately, so datasets with different
    /// noise can share one signal direction.
    pub direction_seed: Option<u64>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_layers: 8,
            d_llm: 32,
            n_prompts: 2000,
            k_samples: 0,
            signal_layer: 4,
            signal_strength: 4.0,
            noise_sigma: 1.0,
            seed: 0,
            test_fraction: 0.2,
            val_fraction: 0.1,
            heads: None,
            logprob_shift: None,
            direction_seed: None,
        }
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn noise(rng: &mut ChaCha8Rng, n: usize, sigma: f32) -> Vec<f32> {
    (0..n)
        .map(|_| sigma * <StandardNormal as Distribution<f32>>::sample(&StandardNormal, rng))
        .collect()
}

pub fn synth_planted(params: &SynthParams) -> Result<Dataset> {
    let p = params;
    if p.n_layers == 0 || p.d_llm == 0 {
        return Err(Error::Argument("need at least one layer and one dimension".into()));
    }
    if !(1..=p.n_layers).contains(&p.signal_layer) {
        return Err(Error::Argument(format!(
            "signal layer {} outside [1, {}]",
            p.signal_layer, p.n_layers
        )));
    }
    if !(p.noise_sigma >= 0.0 && p.signal_strength.is_finite()) {
        return Err(Error::Argument("noise sigma must be non-negative".into()));
    }
    if let Some(h) = p.heads {
        if !(1..=p.n_layers).contains(&h.layer) || !(1..=h.n_heads).contains(&h.head) || h.d_head == 0 {
            return Err(Error::Argument(format!("invalid head signal {h:?}")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let direction = match p.direction_seed {
        Some(ds) => unit_direction(&mut ChaCha8Rng::seed_from_u64(ds), p.d_llm),
        None => unit_direction(&mut rng, p.d_llm),
    };
    let head_direction = p.heads.map(|h| unit_direction(&mut rng, h.d_head));

    let per_prompt = p.k_samples as usize + 1;
    let total = p.n_prompts * per_prompt;
    let mut labels: Vec<u8> = (0..total).map(|i| u8::from(i < total / 2)).collect();
    labels.shuffle(&mut rng);

    let mut records = Vec::with_capacity(total);
    for prompt in 0..p.n_prompts {
        for response in 0..per_prompt {
            let label = labels[prompt * per_prompt + response];
            let sign = if label == 1 { 1.0 } else { -1.0 };
            let mut acts = noise(&mut rng, p.n_layers * p.d_llm, p.noise_sigma);
            let row = (p.signal_layer - 1) * p.d_llm;
            for (a, u) in acts[row..row + p.d_llm].iter_mut().zip(&direction) {
                *a += sign * p.signal_strength * u;
            }
            let head_activations = match (p.heads, &head_direction) {
                (Some(h), Some(u)) => {
                    let mut block = noise(&mut rng, p.n_layers * h.n_heads * h.d_head, p.noise_sigma);
                    let off = ((h.layer - 1) * h.n_heads + (h.head - 1)) * h.d_head;
                    for (a, u) in block[off..off + h.d_head].iter_mut().zip(u) {
                        *a += sign * p.signal_strength * u;
                    }
                    Some(DenseArray::from_vec(&[p.n_layers, h.n_heads, h.d_head], block)?)
                }
                _ => None,
            };
            let token_logprobs = p.logprob_shift.map(|shift| {
                let n = rng.random_range(1..=8);
                (0..n)
                    .map(|_| {
                        let z: f32 = rng.sample(StandardNormal);
                        -(0.5 * z).abs() - if label == 1 { shift } else { 0.0 }
                    })
                    .collect()
            });
            records.push(ActivationRecord {
                prompt_id: prompt as u64,
                response_id: response as u32,
                label,
                activations: DenseArray::from_vec(&[p.n_layers, p.d_llm], acts)?,
                token_logprobs,
                head_activations,
                response_text: None,
            });
        }
    }

    let prompt_ids: Vec<u64> = (0..p.n_prompts as u64).collect();
    let splits = Splits::assign(&prompt_ids, p.test_fraction, p.val_fraction, p.seed ^ 0x5eed)?;
    let manifest = DatasetManifest::new(
        "synthetic",
        &format!("planted-l{}", p.signal_layer),
        p.n_layers,
        p.d_llm,
        p.k_samples,
        splits,
    );
    Dataset::new(manifest, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthParams {
        SynthParams {
            n_layers: 4,
            d_llm: 6,
            n_prompts: 51,
            k_samples: 2,
            signal_layer: 2,
            ..Default::default()
        }
    }

    #[test]
    fn labels_balanced_and_shapes_consistent() {
        let ds = synth_planted(&small()).unwrap();
        assert_eq!(ds.records.len(), 153);
        let ones = ds.records.iter().filter(|r| r.label == 1).count() as i64;
        assert!((2 * ones - 153).abs() <= 1);
        assert!(ds.records.iter().all(|r| r.activations.shape() == [4, 6]));
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(synth_planted(&small()).unwrap(), synth_planted(&small()).unwrap());
        let other = SynthParams { seed: 1, ..small() };
        assert_ne!(synth_planted(&small()).unwrap(), synth_planted(&other).unwrap());
    }

    #[test]
    fn signal_only_at_planted_layer() {
        let p = SynthParams {
            noise_sigma: 0.0,
            ..small()
        };
        let ds = synth_planted(&p).unwrap();
        for r in &ds.records {
            for l in [1, 3, 4] {
                assert!(r.layer(l).iter().all(|&x| x == 0.0));
            }
            let norm: f32 = r.layer(2).iter().map(|x| x * x).sum::<f32>().sqrt();
            assert!((norm - 4.0).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_bad_signal_layer() {
        assert!(synth_planted(&SynthParams { signal_layer: 0, ..small() }).is_err());
        assert!(synth_planted(&SynthParams { signal_layer: 5, ..small() }).is_err());
    }
}
