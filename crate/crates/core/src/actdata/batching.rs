use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::record::ActivationRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BatchingStrategy {
    /// All responses of a prompt land in the same batch.
    #[default]
    PromptWise,
    /// Records are shuffled independently of their prompt.
    Random,
}

/// Indices into the record slice handed to [`make_batches`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Batch {
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn records<'a>(&self, split: &[&'a ActivationRecord]) -> Vec<&'a ActivationRecord> {
        self.indices.iter().map(|&i| split[i]).collect()
    }

    pub fn labels(&self, split: &[&ActivationRecord]) -> Vec<f32> {
        self.indices.iter().map(|&i| f32::from(split[i].label)).collect()
    }
}

/// Groups record indices by prompt, in order of first appearance.
fn prompt_groups(split: &[&ActivationRecord]) -> Vec<Vec<usize>> {
    let mut order: Vec<u64> = Vec::new();
    let mut groups: std::collections::HashMap<u64, Vec<usize>> = Default::default();
    for (i, r) in split.iter().enumerate() {
        groups
            .entry(r.prompt_id)
            .or_insert_with(|| {
                order.push(r.prompt_id);
                Vec::new()
            })
            .push(i);
    }
    order.into_iter().map(|p| groups.remove(&p).unwrap_or_default()).collect()
}

/// Shuffles and packs a split into batches.
///
/// Prompt-wise packing shuffles prompts and closes a batch whenever the next
/// prompt would not fit, so no prompt is ever split. Random packing shuffles
/// records and cuts fixed-size chunks.
pub fn make_batches(
    split: &[&ActivationRecord],
    strategy: BatchingStrategy,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    if split.is_empty() {
        return Err(Error::Argument("cannot batch an empty split".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match strategy {
        BatchingStrategy::Random => {
            let mut idx: Vec<usize> = (0..split.len()).collect();
            idx.shuffle(&mut rng);
            Ok(idx
                .chunks(batch_size)
                .map(|c| Batch { indices: c.to_vec() })
                .collect())
        }
        BatchingStrategy::PromptWise => {
            let mut groups = prompt_groups(split);
            if let Some(big) = groups.iter().find(|g| g.len() > batch_size) {
                return Err(Error::Config(format!(
                    "prompt {} has {} responses, more than batch size {batch_size}",
                    split[big[0]].prompt_id,
                    big.len()
                )));
            }
            groups.shuffle(&mut rng);
            let mut batches = Vec::new();
            let mut current: Vec<usize> = Vec::with_capacity(batch_size);
            for g in groups {
                if current.len() + g.len() > batch_size {
                    batches.push(Batch {
                        indices: std::mem::take(&mut current),
                    });
                }
                current.extend(g);
            }
            if !current.is_empty() {
                batches.push(Batch { indices: current });
            }
            Ok(batches)
        }
    }
}
