use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use claprobe::actdata::{BatchingStrategy, ResponseFilter, Split, SynthParams};
use claprobe::labeling::{RougeVariant, TaskKind};
use claprobe::metrics::MatrixMode;
use claprobe::mitigation::Strategy;
use claprobe::probes::ProbeKind;
use claprobe::runner::{self, ExperimentConfig, LrChoice};
use claprobe::Result;

/// Cross-layer attention probing: train and evaluate hallucination probes on
/// stored LLM activations.
#[derive(Debug, Parser)]
#[command(name = "claprobe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a probe (one model per seed, optional learning-rate grid).
    Train(RunArgs),
    /// Score a dataset split with a saved checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = FilterArg::All)]
        filter: FilterArg,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Write the score table here as CSV.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Apply detect-then-mitigate strategies to greedy/alternate pairs.
    Mitigate {
        #[command(flatten)]
        run: RunArgs,
        /// Detector checkpoint; not needed for `def` and `alt` alone.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated subset of def,def_abstain,alt,clap_i,clap_ii.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
        /// Dataset of alternate responses (its greedy records).
        #[arg(long)]
        alternates: Option<PathBuf>,
    },
    /// Write a synthetic dataset with a planted signal.
    Synth {
        /// Output stem; `.json` and `.bin` are appended.
        #[arg(long)]
        out: PathBuf,
        /// JSON file with generator parameters; flags override it.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        prompts: Option<usize>,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        signal_layer: Option<usize>,
        #[arg(long)]
        strength: Option<f32>,
        #[arg(long)]
        samples: Option<u32>,
    },
    /// Label responses in a JSONL file.
    Label {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = TaskArg::Qa)]
        task: TaskArg,
        /// Use ROUGE-1 recall instead of F1.
        #[arg(long)]
        recall: bool,
    },
    /// In-distribution or out-of-distribution probe matrix.
    Matrix {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
}

/// Flags shared by config-driven commands; each overrides the config key of
/// the same name.
#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "dataset")]
    datasets: Vec<PathBuf>,
    /// Probe kind, e.g. `clap`, `lp_layer16`, `maxpool`, `layer_suite`.
    #[arg(long)]
    probe: Option<String>,
    /// A learning rate or `grid`.
    #[arg(long)]
    lr: Option<String>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum)]
    batching: Option<BatchingArg>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    run_name: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if !self.datasets.is_empty() {
            c.datasets = self.datasets.clone();
        }
        if let Some(kind) = &self.probe {
            c.probe.kind = kind.parse::<ProbeKind>()?;
        }
        if let Some(lr) = &self.lr {
            c.lr = lr.parse::<LrChoice>()?;
        }
        if let Some(s) = &self.seeds {
            c.seeds = s.clone();
        }
        if let Some(e) = self.epochs {
            c.max_epochs = e;
        }
        if let Some(b) = self.batch_size {
            c.batch_size = b;
        }
        if let Some(b) = self.batching {
            c.batching = match b {
                BatchingArg::PromptWise => BatchingStrategy::PromptWise,
                BatchingArg::Random => BatchingStrategy::Random,
            };
        }
        if self.patience.is_some() {
            c.patience = self.patience;
        }
        if let Some(o) = &self.out {
            c.output_dir = o.clone();
        }
        if self.run_name.is_some() {
            c.run_name = self.run_name.clone();
        }
        if self.workers.is_some() {
            c.workers = self.workers;
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FilterArg {
    GreedyOnly,
    SampledOnly,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Qa,
    Cot,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    InDistribution,
    Ood,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BatchingArg {
    PromptWise,
    Random,
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => print_json(&runner::cmd_train(&args.resolve()?)?),
        Command::Eval {
            checkpoint,
            dataset,
            filter,
            split,
            scores,
        } => {
            let filter = match filter {
                FilterArg::GreedyOnly => ResponseFilter::GreedyOnly,
                FilterArg::SampledOnly => ResponseFilter::SampledOnly,
                FilterArg::All => ResponseFilter::All,
            };
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Val => Split::Val,
                SplitArg::Test => Split::Test,
            };
            let out = runner::cmd_eval(&checkpoint, &dataset, filter, split)?;
            if let Some(path) = scores {
                std::fs::write(path, out.table.to_csv())?;
            }
            match out.auc {
                Some(a) => println!("auc {a:.6} over {} records", out.table.rows.len()),
                None => println!("auc undefined (single class) over {} records", out.table.rows.len()),
            }
            Ok(())
        }
        Command::Mitigate {
            run,
            checkpoint,
            strategies,
            alternates,
        } => {
            let mut c = run.resolve()?;
            if let Some(list) = strategies {
                c.strategies = list.iter().map(|s| s.parse::<Strategy>()).collect::<Result<_>>()?;
            }
            if alternates.is_some() {
                c.alternates = alternates;
            }
            let out = runner::cmd_mitigate(&c, checkpoint.as_deref())?;
            print!("{}", out.report.to_csv());
            eprintln!("reports in {}", out.run_dir.display());
            Ok(())
        }
        Command::Synth {
            out,
            params,
            seed,
            prompts,
            layers,
            width,
            signal_layer,
            strength,
            samples,
        } => {
            let mut p: SynthParams = match params {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => SynthParams::default(),
            };
            if let Some(v) = seed {
                p.seed = v;
            }
            if let Some(v) = prompts {
                p.n_prompts = v;
            }
            if let Some(v) = layers {
                p.n_layers = v;
            }
            if let Some(v) = width {
                p.d_llm = v;
            }
            if let Some(v) = signal_layer {
                p.signal_layer = v;
            }
            if let Some(v) = strength {
                p.signal_strength = v;
            }
            if let Some(v) = samples {
                p.k_samples = v;
            }
            let (manifest, payload) = runner::cmd_synth(&p, &out)?;
            println!("{}\n{}", manifest.display(), payload.display());
            Ok(())
        }
        Command::Label {
            input,
            output,
            task,
            recall,
        } => {
            let kind = match task {
                TaskArg::Qa => TaskKind::Qa,
                TaskArg::Cot => TaskKind::Cot,
            };
            let variant = if recall { RougeVariant::Recall } else { RougeVariant::F1 };
            let n = runner::cmd_label(&input, &output, kind, variant)?;
            println!("labeled {n} responses");
            Ok(())
        }
        Command::Matrix { run, mode } => {
            let mut c = run.resolve()?;
            if let Some(m) = mode {
                c.matrix_mode = match m {
                    ModeArg::InDistribution => MatrixMode::InDistribution,
                    ModeArg::Ood => MatrixMode::Ood,
                };
            }
            let out = runner::cmd_matrix(&c)?;
            print!("{}", out.report.to_csv());
            eprintln!("reports in {}", out.run_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
