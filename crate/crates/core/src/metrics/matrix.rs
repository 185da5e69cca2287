use std::collections::BTreeMap;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actdata::{Dataset, ResponseFilter, Split};
use crate::error::{Error, Result};
use crate::probes::{clap_train, score_records, ClapConfig, LayerProbeSuite, SelectionMode, TrainConfig, TrainedProbe};

use super::auc::auc_scores;
use super::summary::{aggregate_seeds, pct_gain, RunSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixMode {
    /// Train and test on the same dataset.
    InDistribution,
    /// Every ordered pair of distinct datasets.
    Ood,
}

#[derive(Debug, Clone)]
pub struct NamedDataset {
    pub name: String,
    pub dataset: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixConfig {
    pub train: TrainConfig,
    /// CLAP variants by column name.
    pub clap: Vec<(String, ClapConfig)>,
    pub seeds: Vec<u64>,
    pub filter: ResponseFilter,
    /// Upper bound on concurrently trained cells.
    pub workers: usize,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            clap: vec![("clap".into(), ClapConfig::default())],
            seeds: vec![0, 1, 2],
            filter: ResponseFilter::All,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub model: String,
    pub train_set: String,
    pub test_set: String,
    pub probe: String,
    pub seed: u64,
    /// `None` when the test split holds a single class.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub train_set: String,
    pub test_set: String,
    pub columns: BTreeMap<String, RunSummary>,
    /// `"<clap column> vs <baseline column>"` → relative gain in percent.
    pub gains: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub mode: MatrixMode,
    pub cells: Vec<MatrixCell>,
    pub pairs: Vec<PairSummary>,
}

impl MatrixReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,train_set,test_set,probe,seed,auc\n");
        for c in &self.cells {
            let auc = c.auc.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{},{auc}\n", c.model, c.train_set, c.test_set, c.probe, c.seed));
        }
        out
    }

    pub fn column(&self, train_set: &str, test_set: &str, probe: &str) -> Option<&RunSummary> {
        self.pairs
            .iter()
            .find(|p| p.train_set == train_set && p.test_set == test_set)?
            .columns
            .get(probe)
    }
}

fn pairs(n: usize, mode: MatrixMode) -> Vec<(usize, usize)> {
    match mode {
        MatrixMode::InDistribution => (0..n).map(|i| (i, i)).collect(),
        MatrixMode::Ood => (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect(),
    }
}

fn check_pair(a: &NamedDataset, b: &NamedDataset, mode: MatrixMode) -> Result<()> {
    let (ma, mb) = (&a.dataset.manifest, &b.dataset.manifest);
    if (ma.n_layers, ma.d_llm) != (mb.n_layers, mb.d_llm) {
        return Err(Error::Incompatible(format!(
            "{} has (L, d) = ({}, {}) but {} has ({}, {})",
            a.name, ma.n_layers, ma.d_llm, b.name, mb.n_layers, mb.d_llm
        )));
    }
    if mode == MatrixMode::Ood && ma.model_name != mb.model_name {
        return Err(Error::Incompatible(format!(
            "{} comes from {} but {} from {}",
            a.name, ma.model_name, b.name, mb.model_name
        )));
    }
    Ok(())
}

struct Trained {
    suite: LayerProbeSuite,
    clap: Vec<TrainedProbe>,
}

fn train_cell(d: &NamedDataset, config: &MatrixConfig, seed: u64) -> Result<Trained> {
    let train = d.dataset.split_filtered(Split::Train, config.filter);
    let val = d.dataset.split_filtered(Split::Val, config.filter);
    let hyper = config.train.with_seed(seed);
    info!("training {} seed {seed}", d.name);
    let suite = LayerProbeSuite::train(&train, &val, &hyper)?;
    let clap = config
        .clap
        .iter()
        .map(|(_, c)| clap_train(&train, &val, c, &hyper))
        .collect::<Result<_>>()?;
    Ok(Trained { suite, clap })
}

fn evaluate(trained: &Trained, config: &MatrixConfig, test: &NamedDataset) -> Result<Vec<(String, Option<f64>)>> {
    let records = test.dataset.split_filtered(Split::Test, config.filter);
    if records.is_empty() {
        return Err(Error::Argument(format!("{} has an empty test split", test.name)));
    }
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let layer_scores = trained.suite.layer_scores(&records)?;
    let mut out = Vec::new();
    for mode in SelectionMode::ALL {
        let scores = layer_scores
            .iter()
            .map(|p| trained.suite.combine(mode, p).map(|s| s.score))
            .collect::<Result<Vec<_>>>()?;
        out.push((mode.name().to_string(), auc_scores(&scores, &labels).ok()));
    }
    for ((name, _), probe) in config.clap.iter().zip(&trained.clap) {
        let scores = score_records(probe, &records)?;
        out.push((name.clone(), auc_scores(&scores, &labels).ok()));
    }
    Ok(out)
}

/// Trains a layer suite and every CLAP variant per (train dataset, seed) and
/// scores them on the test split of each paired dataset.
pub fn run_matrix(datasets: &[NamedDataset], config: &MatrixConfig, mode: MatrixMode) -> Result<MatrixReport> {
    if config.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let pairs = pairs(datasets.len(), mode);
    for &(i, j) in &pairs {
        check_pair(&datasets[i], &datasets[j], mode)?;
    }
    let mut train_sets: Vec<usize> = pairs.iter().map(|&(i, _)| i).collect();
    train_sets.dedup();
    let jobs: Vec<(usize, u64)> = train_sets
        .iter()
        .flat_map(|&i| config.seeds.iter().map(move |&s| (i, s)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let trained: Vec<Trained> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, s)| train_cell(&datasets[i], config, s))
            .collect::<Result<_>>()
    })?;

    let mut cells = Vec::new();
    let mut summaries = Vec::new();
    for &(i, j) in &pairs {
        let (a, b) = (&datasets[i], &datasets[j]);
        let mut per_column: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for ((ti, seed), t) in jobs.iter().zip(&trained) {
            if *ti != i {
                continue;
            }
            for (probe, auc) in evaluate(t, config, b)? {
                if let Some(v) = auc {
                    per_column.entry(probe.clone()).or_default().push(v);
                }
                cells.push(MatrixCell {
                    model: a.dataset.manifest.model_name.clone(),
                    train_set: a.name.clone(),
                    test_set: b.name.clone(),
                    probe,
                    seed: *seed,
                    auc,
                });
            }
        }
        let columns: BTreeMap<String, RunSummary> = per_column
            .iter()
            .map(|(k, v)| aggregate_seeds(v).map(|s| (k.clone(), s)))
            .collect::<Result<_>>()?;
        let mut gains = BTreeMap::new();
        for (name, _) in &config.clap {
            let Some(c) = columns.get(name) else { continue };
            for mode in SelectionMode::ALL {
                if let Some(base) = columns.get(mode.name()) {
                    if let Ok(g) = pct_gain(c.mean, base.mean) {
                        gains.insert(format!("{name} vs {}", mode.name()), g);
                    }
                }
            }
        }
        summaries.push(PairSummary {
            train_set: a.name.clone(),
            test_set: b.name.clone(),
            columns,
            gains,
        });
    }
    Ok(MatrixReport {
        mode,
        cells,
        pairs: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_pair_counts() {
        assert_eq!(pairs(5, MatrixMode::Ood).len(), 20);
        assert!(pairs(1, MatrixMode::Ood).is_empty());
        assert_eq!(pairs(3, MatrixMode::InDistribution), vec![(0, 0), (1, 1), (2, 2)]);
        let p = pairs(2, MatrixMode::Ood);
        assert!(p.contains(&(0, 1)) && p.contains(&(1, 0)));
    }
}
