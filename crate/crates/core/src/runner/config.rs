use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::actdata::{BatchingStrategy, ResponseFilter};
use crate::error::{Error, Result};
use crate::metrics::MatrixMode;
use crate::mitigation::Strategy;
use crate::probes::{ClapConfig, MlpNet, ProbeKind, SelectionMode, TrainConfig};

/// The coarse learning-rate grid searched when `lr` is `"grid"`.
pub const LR_GRID: [f64; 5] = [0.5, 0.05, 0.005, 0.0005, 0.00005];

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "CLAPROBE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrChoice {
    Fixed(f64),
    Grid,
}

impl LrChoice {
    pub fn candidates(&self) -> Vec<f64> {
        match self {
            LrChoice::Fixed(lr) => vec![*lr],
            LrChoice::Grid => LR_GRID.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LrChoice::Fixed(lr) if !(lr.is_finite() && lr > 0.0) => {
                Err(Error::Config(format!("learning rate must be positive and finite, got {lr}")))
            }
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for LrChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "grid" {
            return Ok(LrChoice::Grid);
        }
        let lr: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("learning rate must be a number or \"grid\", got `{s}`")))?;
        let choice = LrChoice::Fixed(lr);
        choice.validate()?;
        Ok(choice)
    }
}

impl Serialize for LrChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LrChoice::Fixed(lr) => s.serialize_f64(*lr),
            LrChoice::Grid => s.serialize_str("grid"),
        }
    }
}

impl<'de> Deserialize<'de> for LrChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(lr) => Ok(LrChoice::Fixed(lr)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// What to train and how it is wired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeSpec {
    pub kind: ProbeKind,
    pub clap: ClapConfig,
    /// Hidden widths of the non-linear probe.
    pub hidden: Vec<usize>,
    /// Projection width of the project-and-concatenate probe.
    pub concat_d_model: usize,
    /// Mode used when a layer suite is scored as a single detector.
    pub suite_mode: SelectionMode,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            kind: ProbeKind::Clap,
            clap: ClapConfig::default(),
            hidden: MlpNet::DEFAULT_HIDDEN.to_vec(),
            concat_d_model: 128,
            suite_mode: SelectionMode::Ma,
        }
    }
}

/// Re-split a dataset by prompt instead of using the stored assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub test: f64,
    pub val: f64,
    pub seed: u64,
}

/// JSON experiment description shared by every subcommand. Unknown keys are
/// rejected; missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset stems or manifest paths. The first is the training set for
    /// `train` and `mitigate`; all of them take part in `matrix`.
    pub datasets: Vec<PathBuf>,
    /// Dataset whose greedy records are the alternate responses (for example
    /// DoLa outputs). Without it the first sampled response of each prompt is
    /// the alternate.
    pub alternates: Option<PathBuf>,
    pub probe: ProbeSpec,
    pub lr: LrChoice,
    pub seeds: Vec<u64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub warmup_epochs: usize,
    pub batching: BatchingStrategy,
    pub patience: Option<usize>,
    pub weight_decay: f64,
    pub split: Option<SplitFractions>,
    /// Responses used for training and evaluation.
    pub filter: ResponseFilter,
    pub strategies: Vec<Strategy>,
    pub matrix_mode: MatrixMode,
    pub output_dir: PathBuf,
    /// Run subdirectory name; a timestamp when absent.
    pub run_name: Option<String>,
    /// Overrides the worker count from the environment.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            datasets: Vec::new(),
            alternates: None,
            probe: ProbeSpec::default(),
            lr: LrChoice::Fixed(t.lr),
            seeds: vec![0, 1, 2],
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            warmup_epochs: t.warmup_epochs,
            batching: t.batching,
            patience: None,
            weight_decay: t.adamw.weight_decay,
            split: None,
            filter: ResponseFilter::All,
            strategies: Strategy::ALL.to_vec(),
            matrix_mode: MatrixMode::Ood,
            output_dir: PathBuf::from("runs"),
            run_name: None,
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.lr.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.warmup_epochs >= self.max_epochs {
            return Err(Error::Config(format!(
                "warmup_epochs ({}) must be below max_epochs ({})",
                self.warmup_epochs, self.max_epochs
            )));
        }
        if !(0.0..1.0).contains(&self.weight_decay) {
            return Err(Error::Config(format!("weight_decay {} outside [0, 1)", self.weight_decay)));
        }
        Ok(())
    }

    /// Training settings for one (lr, seed) cell.
    pub fn train_config(&self, lr: f64, seed: u64) -> TrainConfig {
        let mut t = TrainConfig {
            lr,
            batch_size: self.batch_size,
            warmup_epochs: self.warmup_epochs,
            max_epochs: self.max_epochs,
            batching: self.batching,
            seed,
            patience: self.patience,
            ..Default::default()
        };
        t.adamw.weight_decay = self.weight_decay;
        t
    }

    /// Worker count: config, then the environment, then 1.
    pub fn resolved_workers(&self) -> Result<usize> {
        if let Some(w) = self.workers {
            return Ok(w.max(1));
        }
        match std::env::var(WORKERS_ENV) {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .map(|w| w.max(1))
                .map_err(|_| Error::Config(format!("{WORKERS_ENV}={v} is not a count"))),
            Err(_) => Ok(1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_parsing() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"lr": "grid"}"#).unwrap();
        assert_eq!(c.lr.candidates(), LR_GRID.to_vec());
        let c: ExperimentConfig = serde_json::from_str(r#"{"lr": 0.05}"#).unwrap();
        assert_eq!(c.lr, LrChoice::Fixed(0.05));
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"lr": "fast"}"#).is_err());
        let bad: ExperimentConfig = serde_json::from_str(r#"{"lr": -1.0}"#).unwrap();
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_rejected_and_defaults_filled() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"lrr": 1}"#).is_err());
        let c: ExperimentConfig = serde_json::from_str(r#"{"probe": {"kind": {"lp_layer": 3}}}"#).unwrap();
        assert_eq!(c.probe.kind, ProbeKind::LpLayer(3));
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.probe.clap.d_model, 128);
    }
}
