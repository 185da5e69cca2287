use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::DenseArray;

/// One LLM response with its per-layer activations at the final generated
/// token. `label` is 1 for a hallucination, 0 otherwise; `response_id` 0 is
/// the greedy response and `1..=K` are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub prompt_id: u64,
    pub response_id: u32,
    pub label: u8,
    /// `L × d_LLM`, row `l-1` holds layer `l`.
    pub activations: DenseArray<f32>,
    pub token_logprobs: Option<Vec<f32>>,
    /// `n_layers × n_heads × d_head`
    pub head_activations: Option<DenseArray<f32>>,
    pub response_text: Option<String>,
}

impl ActivationRecord {
    pub fn is_greedy(&self) -> bool {
        self.response_id == 0
    }

    /// Activation row of 1-based `layer`.
    pub fn layer(&self, layer: usize) -> &[f32] {
        self.activations.row(layer - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Which responses of each prompt an operation looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseFilter {
    GreedyOnly,
    SampledOnly,
    #[default]
    All,
}

impl ResponseFilter {
    pub fn keeps(self, record: &ActivationRecord) -> bool {
        match self {
            ResponseFilter::GreedyOnly => record.response_id == 0,
            ResponseFilter::SampledOnly => record.response_id >= 1,
            ResponseFilter::All => true,
        }
    }
}

/// Prompt ids per split.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[u64] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Shuffles `prompt_ids` and carves off the test fraction, then the
    /// validation fraction of what remains.
    pub fn assign(prompt_ids: &[u64], test_fraction: f64, val_fraction: f64, seed: u64) -> Result<Self> {
        for (what, f) in [("test", test_fraction), ("val", val_fraction)] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Argument(format!("{what} fraction {f} outside [0, 1)")));
            }
        }
        let mut ids = prompt_ids.to_vec();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (ids.len() as f64 * test_fraction).round() as usize;
        let test = ids.split_off(ids.len() - n_test);
        let n_val = (ids.len() as f64 * val_fraction).round() as usize;
        let val = ids.split_off(ids.len() - n_val);
        let mut s = Splits { train: ids, val, test };
        s.train.sort_unstable();
        s.val.sort_unstable();
        s.test.sort_unstable();
        Ok(s)
    }

    fn lookup(&self) -> Result<HashMap<u64, Split>> {
        let mut map = HashMap::new();
        for split in Split::ALL {
            for &p in self.get(split) {
                if map.insert(p, split).is_some() {
                    return Err(Error::load(None, format!("prompt {p} assigned to more than one split")));
                }
            }
        }
        Ok(map)
    }
}

/// Label statistics for one split (or the whole dataset under `all`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitStats {
    pub n_prompts: usize,
    pub n_records: usize,
    pub n_greedy: usize,
    pub n_sampled: usize,
    pub hallucinated: usize,
    pub greedy_hallucinated: usize,
    pub sampled_hallucinated: usize,
}

impl SplitStats {
    fn from_records<'a>(records: impl Iterator<Item = &'a ActivationRecord>) -> Self {
        let mut s = SplitStats::default();
        let mut prompts = HashSet::new();
        for r in records {
            prompts.insert(r.prompt_id);
            s.n_records += 1;
            let h = usize::from(r.label == 1);
            s.hallucinated += h;
            if r.is_greedy() {
                s.n_greedy += 1;
                s.greedy_hallucinated += h;
            } else {
                s.n_sampled += 1;
                s.sampled_hallucinated += h;
            }
        }
        s.n_prompts = prompts.len();
        s
    }

    pub fn greedy_hallucination_rate(&self) -> Option<f64> {
        (self.n_greedy > 0).then(|| self.greedy_hallucinated as f64 / self.n_greedy as f64)
    }

    pub fn sampled_hallucination_rate(&self) -> Option<f64> {
        (self.n_sampled > 0).then(|| self.sampled_hallucinated as f64 / self.n_sampled as f64)
    }
}

/// Dataset-level metadata, stored as the JSON half of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub model_name: String,
    pub task_name: String,
    #[serde(rename = "L")]
    pub n_layers: usize,
    pub d_llm: usize,
    pub k_samples: u32,
    pub splits: Splits,
    pub stats: BTreeMap<String, SplitStats>,
    #[serde(default)]
    pub format_version: u32,
    /// File name of the binary payload, relative to the manifest.
    #[serde(default)]
    pub payload: String,
}

impl DatasetManifest {
    pub fn new(model_name: &str, task_name: &str, n_layers: usize, d_llm: usize, k_samples: u32, splits: Splits) -> Self {
        Self {
            model_name: model_name.into(),
            task_name: task_name.into(),
            n_layers,
            d_llm,
            k_samples,
            splits,
            stats: BTreeMap::new(),
            format_version: super::FORMAT_VERSION,
            payload: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Vec<ActivationRecord>,
}

impl Dataset {
    /// Builds a dataset and fills the manifest statistics from the records.
    pub fn new(mut manifest: DatasetManifest, records: Vec<ActivationRecord>) -> Result<Self> {
        manifest.stats = compute_stats(&manifest.splits, &records)?;
        let ds = Self { manifest, records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        let lookup = m.splits.lookup()?;
        for (i, r) in self.records.iter().enumerate() {
            validate_record(i, r, m)?;
            if !lookup.contains_key(&r.prompt_id) {
                return Err(Error::load(i, format!("prompt {} is in no split", r.prompt_id)));
            }
        }
        Ok(())
    }

    pub fn recomputed_stats(&self) -> Result<BTreeMap<String, SplitStats>> {
        compute_stats(&self.manifest.splits, &self.records)
    }

    pub fn split(&self, split: Split) -> Vec<&ActivationRecord> {
        self.split_filtered(split, ResponseFilter::All)
    }

    pub fn split_filtered(&self, split: Split, filter: ResponseFilter) -> Vec<&ActivationRecord> {
        let ids: HashSet<u64> = self.manifest.splits.get(split).iter().copied().collect();
        self.records
            .iter()
            .filter(|r| ids.contains(&r.prompt_id) && filter.keeps(r))
            .collect()
    }

    /// Short content hash of the manifest, used to tie checkpoints to data.
    /// The payload file name is left out so renamed copies still match.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let manifest = DatasetManifest {
            payload: String::new(),
            ..self.manifest.clone()
        };
        let json = serde_json::to_vec(&manifest).unwrap_or_default();
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

pub(crate) fn validate_record(i: usize, r: &ActivationRecord, m: &DatasetManifest) -> Result<()> {
    if r.activations.shape() != [m.n_layers, m.d_llm] {
        return Err(Error::load(
            i,
            format!(
                "prompt {} response {}: activations {:?}, manifest expects [{}, {}]",
                r.prompt_id,
                r.response_id,
                r.activations.shape(),
                m.n_layers,
                m.d_llm
            ),
        ));
    }
    if r.label > 1 {
        return Err(Error::load(i, format!("label {} is not binary", r.label)));
    }
    if r.response_id > m.k_samples {
        return Err(Error::load(
            i,
            format!("response id {} exceeds K = {}", r.response_id, m.k_samples),
        ));
    }
    if let Some(h) = &r.head_activations {
        if h.ndim() != 3 {
            return Err(Error::load(i, format!("head activations shape {:?}", h.shape())));
        }
    }
    Ok(())
}

fn compute_stats(splits: &Splits, records: &[ActivationRecord]) -> Result<BTreeMap<String, SplitStats>> {
    let lookup = splits.lookup()?;
    let mut out = BTreeMap::new();
    for split in Split::ALL {
        let s = SplitStats::from_records(records.iter().filter(|r| lookup.get(&r.prompt_id) == Some(&split)));
        out.insert(split.name().to_string(), s);
    }
    out.insert("all".to_string(), SplitStats::from_records(records.iter()));
    Ok(out)
}
