//! Python bindings: labeling, metrics, the mitigation pipeline, synthetic
//! datasets and probe training.
//!
//!     import claprobe
//!     ds = claprobe.Dataset.synth(n_prompts=400, seed=0)
//!     probe = claprobe.Probe.train(ds, kind="clap", d_model=32, max_epochs=20)
//!     probe.evaluate(ds, "test")

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;

use claprobe_core::actdata::{read_dataset, synth_planted, write_dataset, Dataset, Split, SynthParams};
use claprobe_core::labeling::{self, RougeVariant};
use claprobe_core::metrics::{self, ScoreTable};
use claprobe_core::mitigation::{self, Action, AltKind, Prediction, ResponsePair, Scored, Strategy};
use claprobe_core::numcore::{self, LrSchedule};
use claprobe_core::probes::{self, read_checkpoint, write_checkpoint, Detector, ProbeKind, TrainConfig};
use claprobe_core::runner::{train_detector, ExperimentConfig};
use claprobe_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (Error::TrainingAbort { .. } | Error::NonFinite { .. }) => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// Parses a lowercase enum name through its serde representation.
fn parse<T: DeserializeOwned>(what: &str, s: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} {s:?}")))
}

fn to_pyobject<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyfunction]
#[pyo3(signature = (candidate, references, variant="f1"))]
fn rouge1(candidate: &str, references: Vec<String>, variant: &str) -> PyResult<f64> {
    labeling::rouge1_with(candidate, &references, parse::<RougeVariant>("variant", variant)?).map_err(to_py)
}

/// 1 when the response is a hallucination.
#[pyfunction]
fn label_qa(response: &str, golds: Vec<String>) -> PyResult<u8> {
    labeling::label_qa(response, &golds).map_err(to_py)
}

#[pyfunction]
fn label_cot(response: &str, gold: &str) -> PyResult<u8> {
    labeling::label_cot(response, gold).map_err(to_py)
}

#[pyfunction]
fn is_refusal(response: &str) -> bool {
    labeling::is_refusal(response)
}

/// ROC-AUC with label 1 as positive; `None` when one class is missing.
#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<Option<f64>> {
    match metrics::auc_scores(&scores, &labels) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(to_py(e)),
    }
}

#[pyfunction]
fn macro_f1(predictions: Vec<u8>, labels: Vec<u8>) -> PyResult<f64> {
    metrics::macro_f1(&predictions, &labels).map_err(to_py)
}

/// Returns `(threshold, macro_f1)`.
#[pyfunction]
fn pick_threshold(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<(f64, f64)> {
    let t = metrics::pick_threshold(&ScoreTable::from_scores(&scores, &labels)).map_err(to_py)?;
    Ok((t.value, t.macro_f1))
}

#[pyfunction]
fn pct_gain(a: f64, b: f64) -> PyResult<f64> {
    metrics::pct_gain(a, b).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (epoch, peak_lr, warmup_epochs=5, max_epochs=50))]
fn lr_at(epoch: usize, peak_lr: f64, warmup_epochs: usize, max_epochs: usize) -> PyResult<f64> {
    let schedule = LrSchedule {
        peak_lr,
        warmup_epochs,
        max_epochs,
    };
    numcore::lr_at(epoch, &schedule).map_err(to_py)
}

#[pyfunction]
fn pe_score(token_logprobs: Vec<f32>) -> PyResult<f64> {
    probes::pe_score(&token_logprobs).map_err(to_py)
}

fn prediction(flagged: bool) -> Prediction {
    if flagged {
        Prediction::Hallucinated
    } else {
        Prediction::NotHallucinated
    }
}

/// Action of `strategy` given detector flags: "emit_greedy", "emit_alt" or "abstain".
#[pyfunction]
#[pyo3(signature = (strategy, greedy_flagged, alt_flagged=None))]
fn decide(strategy: &str, greedy_flagged: bool, alt_flagged: Option<bool>) -> PyResult<&'static str> {
    let s: Strategy = strategy.parse().map_err(to_py)?;
    Ok(match mitigation::decide(s, prediction(greedy_flagged), alt_flagged.map(prediction)).map_err(to_py)? {
        Action::EmitGreedy => "emit_greedy",
        Action::EmitAlt => "emit_alt",
        Action::Abstain => "abstain",
    })
}

/// Runs strategies over `(greedy_label, greedy_score, alt_label, alt_score)`
/// tuples; the alternate fields may be `None`. Returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (pairs, threshold, strategies=None))]
fn mitigate<'py>(
    py: Python<'py>,
    pairs: Vec<(u8, f64, Option<u8>, Option<f64>)>,
    threshold: f64,
    strategies: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let strategies = match strategies {
        Some(names) => names.iter().map(|n| n.parse()).collect::<Result<Vec<Strategy>, _>>().map_err(to_py)?,
        None => Strategy::ALL.to_vec(),
    };
    let pairs: Vec<ResponsePair> = pairs
        .into_iter()
        .enumerate()
        .map(|(i, (gl, gs, al, as_))| ResponsePair {
            prompt_id: i as u64,
            greedy: Scored { label: gl, score: gs },
            alternate: al.zip(as_).map(|(label, score)| Scored { label, score }),
            alt_kind: AltKind::RandomSample,
        })
        .collect();
    let report = mitigation::run_pipeline(&pairs, threshold, &strategies).map_err(to_py)?;
    to_pyobject(py, &report)
}

/// An activation dataset held in memory.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Planted-direction synthetic data with a known signal layer.
    #[staticmethod]
    #[pyo3(signature = (n_prompts=400, n_layers=8, d_llm=32, k_samples=0, signal_layer=4, signal_strength=None, seed=0))]
    fn synth(
        py: Python<'_>,
        n_prompts: usize,
        n_layers: usize,
        d_llm: usize,
        k_samples: u32,
        signal_layer: usize,
        signal_strength: Option<f32>,
        seed: u64,
    ) -> PyResult<Self> {
        let mut p = SynthParams {
            n_prompts,
            n_layers,
            d_llm,
            k_samples,
            signal_layer,
            seed,
            ..Default::default()
        };
        if let Some(s) = signal_strength {
            p.signal_strength = s;
        }
        let inner = py.detach(|| synth_planted(&p)).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Reads a dataset from its manifest path or stem.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: read_dataset(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_dataset(&self.inner, &path).map_err(to_py)?;
        Ok(())
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    #[getter]
    fn n_layers(&self) -> usize {
        self.inner.manifest.n_layers
    }

    #[getter]
    fn d_llm(&self) -> usize {
        self.inner.manifest.d_llm
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    #[pyo3(signature = (split="test"))]
    fn labels(&self, split: &str) -> PyResult<Vec<u8>> {
        let split: Split = parse("split", split)?;
        Ok(self.inner.split(split).iter().map(|r| r.label).collect())
    }

    /// Activations of one split as nested lists, `[record][layer][feature]`.
    #[pyo3(signature = (split="test"))]
    fn activations(&self, split: &str) -> PyResult<Vec<Vec<Vec<f32>>>> {
        let split: Split = parse("split", split)?;
        Ok(self
            .inner
            .split(split)
            .iter()
            .map(|r| (1..=self.inner.manifest.n_layers).map(|l| r.layer(l).to_vec()).collect())
            .collect())
    }

    fn __repr__(&self) -> String {
        let m = &self.inner.manifest;
        format!(
            "Dataset(model={:?}, task={:?}, records={}, L={}, d={})",
            m.model_name,
            m.task_name,
            self.inner.records.len(),
            m.n_layers,
            m.d_llm
        )
    }
}

/// A trained hallucination detector.
#[pyclass(name = "Probe", frozen)]
struct PyProbe {
    detector: Detector,
    seed: u64,
}

#[pymethods]
impl PyProbe {
    /// Trains on the train split, selecting the epoch by validation AUC.
    ///
    /// `kind` takes probe names such as "clap", "lp_layer4", "maxpool" or
    /// "layer_suite".
    #[staticmethod]
    #[pyo3(signature = (dataset, kind="clap", lr=0.005, max_epochs=50, batch_size=128, seed=0, d_model=128, n_enc=1, n_heads=4, positional_embeddings=true, patience=None))]
    fn train(
        py: Python<'_>,
        dataset: &PyDataset,
        kind: &str,
        lr: f64,
        max_epochs: usize,
        batch_size: usize,
        seed: u64,
        d_model: usize,
        n_enc: usize,
        n_heads: usize,
        positional_embeddings: bool,
        patience: Option<usize>,
    ) -> PyResult<Self> {
        let mut config = ExperimentConfig::default();
        config.probe.kind = kind.parse::<ProbeKind>().map_err(to_py)?;
        config.probe.clap.d_model = d_model;
        config.probe.clap.n_enc = n_enc;
        config.probe.clap.n_heads = n_heads;
        config.probe.clap.positional_embeddings = positional_embeddings;
        let hyper = TrainConfig {
            lr,
            max_epochs,
            batch_size,
            seed,
            patience,
            warmup_epochs: TrainConfig::default().warmup_epochs.min(max_epochs.saturating_sub(1)),
            ..Default::default()
        };
        let ds = &dataset.inner;
        let detector = py
            .detach(|| train_detector(&config, &ds.split(Split::Train), &ds.split(Split::Val), &hyper))
            .map_err(to_py)?;
        Ok(Self { detector, seed })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (header, detector) = read_checkpoint(&path).map_err(to_py)?;
        Ok(Self {
            detector,
            seed: header.seed,
        })
    }

    #[pyo3(signature = (path, dataset=None))]
    fn save(&self, path: PathBuf, dataset: Option<&PyDataset>) -> PyResult<()> {
        let fp = dataset.map(|d| d.inner.fingerprint()).unwrap_or_default();
        write_checkpoint(&path, &self.detector, &fp, self.seed).map_err(to_py)?;
        Ok(())
    }

    #[getter]
    fn kind(&self) -> String {
        self.detector.label()
    }

    /// Hallucination scores in (0, 1) for the records of a split.
    #[pyo3(signature = (dataset, split="test"))]
    fn score(&self, py: Python<'_>, dataset: &PyDataset, split: &str) -> PyResult<Vec<f64>> {
        let split: Split = parse("split", split)?;
        py.detach(|| self.detector.score(&dataset.inner.split(split))).map_err(to_py)
    }

    #[pyo3(signature = (dataset, split="test"))]
    fn evaluate(&self, py: Python<'_>, dataset: &PyDataset, split: &str) -> PyResult<Option<f64>> {
        let scores = self.score(py, dataset, split)?;
        let s: Split = parse("split", split)?;
        let labels: Vec<u8> = dataset.inner.split(s).iter().map(|r| r.label).collect();
        auc(scores, labels)
    }

    /// Per-epoch training statistics as a list of dicts (empty for suites
    /// and predictive entropy).
    fn history<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        match &self.detector {
            Detector::Network(p) => to_pyobject(py, &p.history),
            _ => to_pyobject(py, &serde_json::Value::Null),
        }
    }

    fn __repr__(&self) -> String {
        format!("Probe(kind={:?}, seed={})", self.detector.label(), self.seed)
    }
}

#[pymodule]
fn claprobe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(rouge1, m)?)?;
    m.add_function(wrap_pyfunction!(label_qa, m)?)?;
    m.add_function(wrap_pyfunction!(label_cot, m)?)?;
    m.add_function(wrap_pyfunction!(is_refusal, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(macro_f1, m)?)?;
    m.add_function(wrap_pyfunction!(pick_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(pct_gain, m)?)?;
    m.add_function(wrap_pyfunction!(lr_at, m)?)?;
    m.add_function(wrap_pyfunction!(pe_score, m)?)?;
    m.add_function(wrap_pyfunction!(decide, m)?)?;
    m.add_function(wrap_pyfunction!(mitigate, m)?)?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyProbe>()?;
    Ok(())
}
