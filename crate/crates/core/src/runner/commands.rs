use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actdata::{read_dataset, synth_planted, write_dataset, Dataset, ResponseFilter, Split, Splits, SynthParams};
use crate::error::{Error, Result};
use crate::labeling::{label_response, LabeledResponse, RougeVariant, TaskKind};
use crate::metrics::{
    aggregate_seeds, auc, pick_threshold, run_matrix, MatrixConfig, MatrixReport, NamedDataset, RunSummary, ScoreRow,
    ScoreTable,
};
use crate::mitigation::{pair_records, run_pipeline, AltKind, MitigationReport, Strategy};
use crate::probes::{
    ah_best_head, clap_train, lp_train, nlp_train, project_concat_train, read_checkpoint, train_network,
    write_checkpoint, Detector, FeatureSource, History, LayerProbeSuite, LinearNet, Network, ProbeKind,
    TrainConfig,
};

use super::config::{ExperimentConfig, LrChoice, SplitFractions};

/// `checkpoints/`, `scores/`, `reports/` and `logs/` under one run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLayout {
    pub root: PathBuf,
    pub checkpoints: PathBuf,
    pub scores: PathBuf,
    pub reports: PathBuf,
    pub logs: PathBuf,
}

impl RunLayout {
    /// Creates a fresh run directory and stores the resolved config in it.
    pub fn create(config: &ExperimentConfig) -> Result<Self> {
        let name = match &config.run_name {
            Some(n) => n.clone(),
            None => {
                let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
                let mut name = format!("run-{secs}");
                let mut k = 1;
                while config.output_dir.join(&name).exists() {
                    name = format!("run-{secs}-{k}");
                    k += 1;
                }
                name
            }
        };
        let root = config.output_dir.join(name);
        let layout = Self {
            checkpoints: root.join("checkpoints"),
            scores: root.join("scores"),
            reports: root.join("reports"),
            logs: root.join("logs"),
            root,
        };
        for dir in [&layout.checkpoints, &layout.scores, &layout.reports, &layout.logs] {
            fs::create_dir_all(dir)?;
        }
        write_json(&layout.root.join("config.json"), config)?;
        Ok(layout)
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn fingerprint<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(&Sha256::digest(&bytes)[..8]))
}

/// Fingerprint of the experiment itself; output placement and worker count
/// do not change results and are left out.
fn config_fingerprint(config: &ExperimentConfig) -> Result<String> {
    let mut c = config.clone();
    c.output_dir = PathBuf::new();
    c.run_name = None;
    c.workers = None;
    fingerprint(&c)
}

fn worker_pool(config: &ExperimentConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.resolved_workers()?)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Loads a dataset, optionally replacing its split assignment.
pub fn load_dataset(path: &Path, split: Option<SplitFractions>) -> Result<Dataset> {
    let ds = read_dataset(path)?;
    let Some(f) = split else { return Ok(ds) };
    let mut ids: Vec<u64> = ds.records.iter().map(|r| r.prompt_id).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut manifest = ds.manifest;
    manifest.splits = Splits::assign(&ids, f.test, f.val, f.seed)?;
    Dataset::new(manifest, ds.records)
}

fn first_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let path = config
        .datasets
        .first()
        .ok_or_else(|| Error::Config("config lists no datasets".into()))?;
    load_dataset(path, config.split)
}

fn score_table(detector: &Detector, records: &[&crate::actdata::ActivationRecord], dataset: &str, seed: Option<u64>) -> Result<ScoreTable> {
    let scores = detector.score(records)?;
    Ok(ScoreTable {
        probe: detector.label(),
        dataset: dataset.to_string(),
        seed,
        rows: records
            .iter()
            .zip(scores)
            .map(|(r, score)| ScoreRow {
                prompt_id: r.prompt_id,
                response_id: r.response_id,
                score,
                label: r.label,
            })
            .collect(),
    })
}

/// Trains the detector described by the probe spec on one (lr, seed) cell.
pub fn train_detector(
    config: &ExperimentConfig,
    train: &[&crate::actdata::ActivationRecord],
    val: &[&crate::actdata::ActivationRecord],
    hyper: &TrainConfig,
) -> Result<Detector> {
    let spec = &config.probe;
    Ok(match spec.kind {
        ProbeKind::Clap => Detector::Network(clap_train(train, val, &spec.clap, hyper)?),
        ProbeKind::LpLayer(l) => Detector::Network(lp_train(train, val, l, hyper)?),
        ProbeKind::NlpLayer(l) => Detector::Network(nlp_train(train, val, l, &spec.hidden, hyper)?),
        ProbeKind::Maxpool => {
            let d = train
                .first()
                .ok_or_else(|| Error::Argument("empty training split".into()))?
                .activations
                .dims2()?
                .1;
            let net = Network::Linear(LinearNet {
                source: FeatureSource::Maxpool,
                input_width: d,
            });
            Detector::Network(train_network(net, train, val, hyper)?)
        }
        ProbeKind::ProjectConcat => Detector::Network(project_concat_train(train, val, spec.concat_d_model, hyper)?),
        ProbeKind::LayerSuite => Detector::Suite(LayerProbeSuite::train(train, val, hyper)?, spec.suite_mode),
        ProbeKind::AttentionHead => Detector::Network(ah_best_head(train, val, hyper)?.probe),
        ProbeKind::PredictiveEntropy => Detector::PredictiveEntropy,
    })
}

fn split_auc(detector: &Detector, records: &[&crate::actdata::ActivationRecord]) -> Result<Option<f64>> {
    if records.is_empty() {
        return Ok(None);
    }
    Ok(auc(&score_table(detector, records, "", None)?).ok())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lr: f64,
    pub seed: u64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub selected_lr: f64,
    pub grid: Vec<GridPoint>,
    /// Validation AUC of the kept model per seed.
    pub val: Option<RunSummary>,
    /// Test AUC per seed.
    pub test: Option<RunSummary>,
    pub checkpoints: Vec<PathBuf>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(values: &[Option<f64>], fp: &str) -> Result<Option<RunSummary>> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Ok(None);
    }
    let mut s = aggregate_seeds(&defined)?;
    s.config_fingerprint = fp.to_string();
    Ok(Some(s))
}

fn histories(detector: &Detector) -> Vec<&History> {
    match detector {
        Detector::Network(p) => vec![&p.history],
        Detector::Suite(s, _) => s.probes.iter().map(|p| &p.history).collect(),
        Detector::PredictiveEntropy => Vec::new(),
    }
}

/// Trains one model per (lr, seed); with `lr = "grid"` keeps the learning
/// rate whose mean validation AUC over seeds is highest (ties → earlier grid
/// entry). Writes checkpoints, test scores, histories and a summary.
pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let dataset = first_dataset(config)?;
    let train = dataset.split_filtered(Split::Train, config.filter);
    let val = dataset.split_filtered(Split::Val, config.filter);
    let test = dataset.split_filtered(Split::Test, config.filter);
    let layout = RunLayout::create(config)?;
    let fp = config_fingerprint(config)?;

    let lrs = config.lr.candidates();
    let cells: Vec<(f64, u64)> = lrs
        .iter()
        .flat_map(|&lr| config.seeds.iter().map(move |&s| (lr, s)))
        .collect();
    let pool = worker_pool(config)?;
    let trained: Vec<(Detector, Option<f64>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(lr, seed)| {
                info!("training {} lr {lr} seed {seed}", config.probe.kind.label());
                let d = train_detector(config, &train, &val, &config.train_config(lr, seed))?;
                let a = split_auc(&d, &val)?;
                Ok((d, a))
            })
            .collect::<Result<_>>()
    })?;

    let grid: Vec<GridPoint> = cells
        .iter()
        .zip(&trained)
        .map(|(&(lr, seed), (_, val_auc))| GridPoint { lr, seed, val_auc: *val_auc })
        .collect();
    let mut selected = lrs[0];
    let mut best = f64::NEG_INFINITY;
    for &lr in &lrs {
        let m = mean_defined(grid.iter().filter(|g| g.lr == lr).map(|g| g.val_auc)).unwrap_or(f64::NEG_INFINITY);
        if m > best {
            best = m;
            selected = lr;
        }
    }

    let task = dataset.manifest.task_name.clone();
    let mut checkpoints = Vec::new();
    let mut val_aucs = Vec::new();
    let mut test_aucs = Vec::new();
    for (&(lr, seed), (detector, val_auc)) in cells.iter().zip(&trained) {
        if lr != selected {
            continue;
        }
        let ckpt = layout.checkpoints.join(format!("seed{seed}.ckpt"));
        write_checkpoint(&ckpt, detector, &dataset.fingerprint(), seed)?;
        checkpoints.push(ckpt);
        write_json(&layout.logs.join(format!("history_seed{seed}.json")), &histories(detector))?;
        val_aucs.push(*val_auc);
        if !test.is_empty() {
            let table = score_table(detector, &test, &task, Some(seed))?;
            fs::write(layout.scores.join(format!("test_seed{seed}.csv")), table.to_csv())?;
            test_aucs.push(auc(&table).ok());
        }
    }
    let outcome = TrainOutcome {
        run_dir: layout.root.clone(),
        selected_lr: selected,
        grid,
        val: summarize(&val_aucs, &fp)?,
        test: summarize(&test_aucs, &fp)?,
        checkpoints,
    };
    write_json(&layout.reports.join("train_summary.json"), &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub table: ScoreTable,
    /// `None` when the evaluated records hold a single class.
    pub auc: Option<f64>,
}

/// Scores one split of a dataset with a saved detector.
pub fn cmd_eval(checkpoint: &Path, dataset: &Path, filter: ResponseFilter, split: Split) -> Result<EvalOutcome> {
    let (header, detector) = read_checkpoint(checkpoint)?;
    let ds = read_dataset(dataset)?;
    let records = ds.split_filtered(split, filter);
    if records.is_empty() {
        return Err(Error::Argument(format!("no {} records in the {} split", filter_name(filter), split.name())));
    }
    let table = score_table(&detector, &records, &ds.manifest.task_name, Some(header.seed))?;
    let auc = auc(&table).ok();
    Ok(EvalOutcome { table, auc })
}

fn filter_name(f: ResponseFilter) -> &'static str {
    match f {
        ResponseFilter::GreedyOnly => "greedy",
        ResponseFilter::SampledOnly => "sampled",
        ResponseFilter::All => "",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigateOutcome {
    pub run_dir: PathBuf,
    pub report: MitigationReport,
}

/// Runs the mitigation strategies on the test split's greedy responses. The
/// detector threshold comes from the validation split.
pub fn cmd_mitigate(config: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<MitigateOutcome> {
    config.validate()?;
    let dataset = first_dataset(config)?;
    let needs_detector = config
        .strategies
        .iter()
        .any(|s| !matches!(s, Strategy::Def | Strategy::Alt));
    let detector = match checkpoint {
        Some(p) => Some(read_checkpoint(p)?.1),
        None if needs_detector => {
            return Err(Error::Argument("the selected strategies need a detector checkpoint".into()));
        }
        None => None,
    };

    let greedy = dataset.split_filtered(Split::Test, ResponseFilter::GreedyOnly);
    let (alt_records, alt_kind, alt_ds);
    match &config.alternates {
        Some(path) => {
            alt_ds = read_dataset(path)?;
            alt_records = alt_ds.records.iter().filter(|r| r.is_greedy()).collect::<Vec<_>>();
            alt_kind = AltKind::Dola;
        }
        None => {
            alt_records = dataset
                .split(Split::Test)
                .into_iter()
                .filter(|r| r.response_id == 1)
                .collect();
            alt_kind = AltKind::RandomSample;
        }
    }
    let (threshold, gs, als) = match &detector {
        Some(d) => {
            let val = dataset.split_filtered(Split::Val, config.filter);
            let table = score_table(d, &val, &dataset.manifest.task_name, None)?;
            let threshold = pick_threshold(&table)?.value;
            let gs = d.score(&greedy)?;
            let als = if alt_records.is_empty() { Vec::new() } else { d.score(&alt_records)? };
            (threshold, gs, als)
        }
        None => (f64::INFINITY, vec![0.0; greedy.len()], vec![0.0; alt_records.len()]),
    };
    let g: Vec<_> = greedy.iter().copied().zip(gs).collect();
    let a: Vec<_> = alt_records.iter().copied().zip(als).collect();
    let pairs = pair_records(&g, &a, alt_kind);
    let report = run_pipeline(&pairs, threshold, &config.strategies)?;

    let layout = RunLayout::create(config)?;
    write_json(&layout.reports.join("mitigation.json"), &report)?;
    fs::write(layout.reports.join("mitigation.csv"), report.to_csv())?;
    Ok(MitigateOutcome {
        run_dir: layout.root,
        report,
    })
}

/// Writes a planted-signal dataset to `out` (stem, `.json` and `.bin`).
pub fn cmd_synth(params: &SynthParams, out: &Path) -> Result<(PathBuf, PathBuf)> {
    let ds = synth_planted(params)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_dataset(&ds, out)
}

#[derive(Debug, Deserialize)]
struct LabelInput {
    response: String,
    #[serde(default)]
    golds: Vec<String>,
    #[serde(default)]
    gold: Option<String>,
    #[serde(default)]
    task: Option<TaskKind>,
}

/// Labels a JSONL file of `{response, golds | gold, task?}` objects and
/// writes one labeled object per line. Returns the number of lines.
pub fn cmd_label(input: &Path, output: &Path, default_kind: TaskKind, variant: RougeVariant) -> Result<usize> {
    let reader = BufReader::new(fs::File::open(input)?);
    let mut labeled: Vec<LabeledResponse> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: LabelInput =
            serde_json::from_str(&line).map_err(|e| Error::Argument(format!("line {}: {e}", i + 1)))?;
        let mut golds = item.golds;
        golds.extend(item.gold);
        let kind = item.task.unwrap_or(default_kind);
        labeled.push(
            label_response(&item.response, &golds, kind, variant)
                .map_err(|e| Error::Argument(format!("line {}: {e}", i + 1)))?,
        );
    }
    let mut w = BufWriter::new(fs::File::create(output)?);
    for l in &labeled {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(labeled.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixOutcome {
    pub run_dir: PathBuf,
    pub report: MatrixReport,
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// In-distribution or OOD matrix over all configured datasets.
pub fn cmd_matrix(config: &ExperimentConfig) -> Result<MatrixOutcome> {
    config.validate()?;
    let LrChoice::Fixed(lr) = config.lr else {
        return Err(Error::Config("the matrix runner needs an explicit learning rate".into()));
    };
    let mut datasets = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for path in &config.datasets {
        let mut name = dataset_name(path);
        let count = seen.entry(name.clone()).or_default();
        *count += 1;
        if *count > 1 {
            name = format!("{name}#{count}");
        }
        datasets.push(NamedDataset {
            name,
            dataset: load_dataset(path, config.split)?,
        });
    }
    let mc = MatrixConfig {
        train: config.train_config(lr, 0),
        clap: vec![("clap".into(), config.probe.clap)],
        seeds: config.seeds.clone(),
        filter: config.filter,
        workers: config.resolved_workers()?,
    };
    let report = run_matrix(&datasets, &mc, config.matrix_mode)?;
    let layout = RunLayout::create(config)?;
    fs::write(layout.reports.join("matrix.csv"), report.to_csv())?;
    write_json(&layout.reports.join("matrix.json"), &report)?;
    Ok(MatrixOutcome {
        run_dir: layout.root,
        report,
    })
}
