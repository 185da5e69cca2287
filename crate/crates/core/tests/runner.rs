use std::path::{Path, PathBuf};
use std::process::Command;

use claprobe::actdata::{
    read_dataset, write_dataset, ActivationRecord, Dataset, DatasetManifest, ResponseFilter, Split, Splits, SynthParams,
};
use claprobe::labeling::{rouge1, RougeVariant, TaskKind};
use claprobe::mitigation::Strategy;
use claprobe::numcore::DenseArray;
use claprobe::probes::{write_checkpoint, Detector, FeatureSource, LinearNet, Network, ProbeKind, TrainedProbe, History};
use claprobe::runner::{cmd_eval, cmd_label, cmd_matrix, cmd_mitigate, cmd_synth, cmd_train, ExperimentConfig, LrChoice, LR_GRID};
use claprobe::Error;

fn synth(dir: &Path, name: &str, params: SynthParams) -> PathBuf {
    let stem = dir.join(name);
    cmd_synth(&params, &stem).unwrap();
    stem
}

fn small(seed: u64) -> SynthParams {
    SynthParams {
        n_prompts: 300,
        seed,
        ..Default::default()
    }
}

fn lp_config(dir: &Path, dataset: PathBuf) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        datasets: vec![dataset],
        max_epochs: 8,
        seeds: vec![0],
        output_dir: dir.join("runs"),
        ..Default::default()
    };
    c.probe.kind = ProbeKind::LpLayer(4);
    c
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("x")).unwrap();
    std::fs::create_dir(dir.path().join("y")).unwrap();
    let a = synth(&dir.path().join("x"), "d", small(3));
    let b = synth(&dir.path().join("y"), "d", small(3));
    for ext in ["json", "bin"] {
        let x = std::fs::read(a.with_extension(ext)).unwrap();
        let y = std::fs::read(b.with_extension(ext)).unwrap();
        assert_eq!(x, y, "{ext} differs");
    }
}

#[test]
fn grid_search_trains_every_rate_and_keeps_the_best() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d", small(0));
    let mut c = lp_config(dir.path(), data);
    c.lr = LrChoice::Grid;
    c.run_name = Some("grid".into());
    let out = cmd_train(&c).unwrap();
    assert_eq!(out.grid.len(), 5);
    assert_eq!(out.grid.iter().map(|g| g.lr).collect::<Vec<_>>(), LR_GRID.to_vec());
    let best = out
        .grid
        .iter()
        .map(|g| g.val_auc.unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let first_best = out.grid.iter().find(|g| g.val_auc == Some(best)).unwrap().lr;
    assert_eq!(out.selected_lr, first_best);
    assert_eq!(out.checkpoints.len(), 1);
    for sub in ["checkpoints", "scores", "reports", "logs"] {
        assert!(out.run_dir.join(sub).is_dir(), "{sub} missing");
    }
    assert!(out.run_dir.join("config.json").is_file());
    assert!(out.run_dir.join("reports/train_summary.json").is_file());
    assert!(out.run_dir.join("scores/test_seed0.csv").is_file());
}

#[test]
fn explicit_rate_runs_once_per_seed_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d", small(1));
    let mut c = lp_config(dir.path(), data);
    c.seeds = vec![4, 5];
    c.run_name = Some("one".into());
    let a = cmd_train(&c).unwrap();
    assert_eq!(a.grid.len(), 2);
    assert_eq!(a.checkpoints.len(), 2);
    c.run_name = Some("two".into());
    let b = cmd_train(&c).unwrap();
    for (x, y) in a.checkpoints.iter().zip(&b.checkpoints) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    assert_eq!(a.val, b.val);
    assert_eq!(a.test, b.test);
}

#[test]
fn invalid_learning_rate_is_a_config_error() {
    assert!(matches!("fast".parse::<LrChoice>(), Err(Error::Config(_))));
    assert!(matches!("0".parse::<LrChoice>(), Err(Error::Config(_))));
    let c: ExperimentConfig = serde_json::from_str(r#"{"lr": -0.1, "datasets": ["x"]}"#).unwrap();
    assert!(matches!(cmd_train(&c), Err(Error::Config(_))));
}

#[test]
fn eval_filters_and_matches_validation_auc_on_fresh_data() {
    let dir = tempfile::tempdir().unwrap();
    let params = |seed| SynthParams {
        n_prompts: 2000,
        k_samples: 1,
        signal_strength: 1.5,
        val_fraction: 0.3,
        test_fraction: 0.3,
        direction_seed: Some(9),
        seed,
        ..Default::default()
    };
    let train = synth(dir.path(), "train", params(0));
    let fresh = synth(dir.path(), "fresh", params(1));
    let mut c = lp_config(dir.path(), train);
    c.max_epochs = 20;
    let out = cmd_train(&c).unwrap();
    let val_auc = out.grid[0].val_auc.unwrap();
    let ckpt = &out.checkpoints[0];

    let greedy = cmd_eval(ckpt, &fresh, ResponseFilter::GreedyOnly, Split::Test).unwrap();
    assert!(greedy.table.rows.iter().all(|r| r.response_id == 0));
    let sampled = cmd_eval(ckpt, &fresh, ResponseFilter::SampledOnly, Split::Test).unwrap();
    assert!(sampled.table.rows.iter().all(|r| r.response_id >= 1));
    let all = cmd_eval(ckpt, &fresh, ResponseFilter::All, Split::Test).unwrap();
    assert_eq!(all.table.rows.len(), greedy.table.rows.len() + sampled.table.rows.len());
    assert!((all.auc.unwrap() - val_auc).abs() <= 0.02, "eval {} vs val {val_auc}", all.auc.unwrap());
    assert_eq!(cmd_eval(ckpt, &fresh, ResponseFilter::All, Split::Test).unwrap(), all);

    let other = synth(dir.path(), "wide", SynthParams { d_llm: 8, ..small(0) });
    assert!(matches!(
        cmd_eval(ckpt, &other, ResponseFilter::All, Split::Test),
        Err(Error::Incompatible(_))
    ));
}

/// Two responses per prompt whose first activation coordinate is ±1 by label.
fn labeled_pairs_dataset(dir: &Path) -> PathBuf {
    let ids: Vec<u64> = (0..120).collect();
    let splits = Splits::assign(&ids, 0.5, 0.2, 1).unwrap();
    let mut records = Vec::new();
    for &p in &ids {
        for r in 0..2u32 {
            let label = u8::from((p * 7 + u64::from(r) * 3) % 5 < 2);
            let x = if label == 1 { 1.0 } else { -1.0 };
            records.push(ActivationRecord {
                prompt_id: p,
                response_id: r,
                label,
                activations: DenseArray::from_vec(&[1, 2], vec![x, 0.25]).unwrap(),
                token_logprobs: None,
                head_activations: None,
                response_text: None,
            });
        }
    }
    let ds = Dataset::new(DatasetManifest::new("toy", "pairs", 1, 2, 1, splits), records).unwrap();
    let stem = dir.join("pairs");
    write_dataset(&ds, &stem).unwrap();
    stem
}

fn oracle_checkpoint(dir: &Path, fingerprint: &str) -> PathBuf {
    let net = Network::Linear(LinearNet {
        source: FeatureSource::Layer(1),
        input_width: 2,
    });
    let mut params = net.init_params(0).unwrap();
    params.get_mut("w").unwrap().data_mut().copy_from_slice(&[50.0, 0.0]);
    params.get_mut("b").unwrap().fill(0.0);
    let path = dir.join("oracle.ckpt");
    let probe = TrainedProbe {
        net,
        params,
        history: History::default(),
    };
    write_checkpoint(&path, &Detector::Network(probe), fingerprint, 0).unwrap();
    path
}

#[test]
fn mitigation_with_oracle_detector_matches_hand_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = labeled_pairs_dataset(dir.path());
    let ds = read_dataset(&data).unwrap();
    let ckpt = oracle_checkpoint(dir.path(), &ds.fingerprint());
    let mut c = ExperimentConfig {
        datasets: vec![data],
        output_dir: dir.path().join("runs"),
        run_name: Some("m".into()),
        ..Default::default()
    };
    let out = cmd_mitigate(&c, Some(&ckpt)).unwrap();

    let test = ds.split(Split::Test);
    let greedy: Vec<&ActivationRecord> = test.iter().copied().filter(|r| r.response_id == 0).collect();
    let alt_label = |p: u64| test.iter().find(|r| r.prompt_id == p && r.response_id == 1).unwrap().label;
    let n = greedy.len() as f64;
    let nh = greedy.iter().filter(|r| r.label == 0).count() as f64;
    let rescued = greedy.iter().filter(|r| r.label == 1 && alt_label(r.prompt_id) == 0).count() as f64;
    let both_h = greedy.iter().filter(|r| r.label == 1 && alt_label(r.prompt_id) == 1).count() as f64;

    let get = |s| out.report.get(s).unwrap().clone();
    assert!((get(Strategy::Def).pct_nh.unwrap() - 100.0 * nh / n).abs() < 1e-9);
    let ci = get(Strategy::ClapI);
    assert!((ci.pct_nh.unwrap() - 100.0 * (nh + rescued) / n).abs() < 1e-9);
    assert_eq!((ci.h_to_nh as f64, ci.nh_to_h), (rescued, 0));
    let cii = get(Strategy::ClapII);
    assert_eq!(cii.pct_nh, Some(100.0));
    assert!((cii.pct_abs - 100.0 * both_h / n).abs() < 1e-9);
    assert_eq!((cii.pct_abs_but_nh, cii.nh_to_h), (0.0, 0));
    let da = get(Strategy::DefAbstain);
    assert!((da.pct_abs - 100.0 * (n - nh) / n).abs() < 1e-9);
    assert!(out.run_dir.join("reports/mitigation.json").is_file());
    assert!(out.run_dir.join("reports/mitigation.csv").is_file());

    c.strategies = vec![Strategy::Def];
    c.run_name = Some("def".into());
    let def_only = cmd_mitigate(&c, None).unwrap();
    assert_eq!(def_only.report.strategies.len(), 1);
    c.strategies = vec![Strategy::ClapII];
    assert!(matches!(cmd_mitigate(&c, None), Err(Error::Argument(_))));
}

#[test]
fn clap_ii_without_alternates_is_an_argument_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "k0", small(0));
    let ckpt = {
        let mut c = lp_config(dir.path(), data.clone());
        c.max_epochs = 6;
        cmd_train(&c).unwrap().checkpoints[0].clone()
    };
    let c = ExperimentConfig {
        datasets: vec![data],
        strategies: vec![Strategy::ClapII],
        output_dir: dir.path().join("runs"),
        ..Default::default()
    };
    assert!(matches!(cmd_mitigate(&c, Some(&ckpt)), Err(Error::Argument(_))));
}

#[test]
fn matrix_on_two_datasets_yields_two_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a", small(0));
    let b = synth(dir.path(), "b", small(1));
    let mut c = ExperimentConfig {
        datasets: vec![a, b],
        max_epochs: 6,
        seeds: vec![0],
        output_dir: dir.path().join("runs"),
        run_name: Some("mx".into()),
        ..Default::default()
    };
    c.probe.clap.d_model = 8;
    let out = cmd_matrix(&c).unwrap();
    assert_eq!(out.report.pairs.len(), 2);
    assert_eq!(out.report.cells.len(), 2 * 5);
    assert!(out.run_dir.join("reports/matrix.csv").is_file());
    c.lr = LrChoice::Grid;
    assert!(matches!(cmd_matrix(&c), Err(Error::Config(_))));
}

#[test]
fn label_command_agrees_with_labeling_module() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let output = dir.path().join("out.jsonl");
    let cases = [
        ("i think it is paris", "paris"),
        ("i really think it is paris", "paris"),
        ("the eiffel tower", "eiffel tower in paris"),
        ("london", "paris"),
    ];
    let lines: Vec<String> = cases
        .iter()
        .map(|(r, g)| serde_json::json!({"response": r, "golds": [g]}).to_string())
        .chain([serde_json::json!({"response": "so the answer is yes", "gold": "yes", "task": "cot"}).to_string()])
        .collect();
    std::fs::write(&input, lines.join("\n")).unwrap();
    assert_eq!(cmd_label(&input, &output, TaskKind::Qa, RougeVariant::F1).unwrap(), 5);
    let text = std::fs::read_to_string(&output).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    for ((resp, gold), row) in cases.iter().zip(&rows) {
        let score = rouge1(resp, &[gold]).unwrap();
        assert_eq!(row["rouge1_score"].as_f64().unwrap(), score);
        assert_eq!(row["label"].as_u64().unwrap(), u64::from(score < 0.3));
    }
    assert_eq!(rows[4]["label"], 0);
}

#[test]
fn binary_exit_status_follows_errors() {
    let bin = env!("CARGO_BIN_EXE_claprobe");
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("s");
    let ok = Command::new(bin)
        .args(["synth", "--prompts", "40", "--out"])
        .arg(&stem)
        .output()
        .unwrap();
    assert!(ok.status.success());
    let missing = Command::new(bin)
        .args(["eval", "--checkpoint", "/nonexistent.ckpt", "--dataset"])
        .arg(&stem)
        .output()
        .unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
    let bad_workers = Command::new(bin)
        .env("CLAPROBE_WORKERS", "many")
        .args(["train", "--epochs", "6", "--run-name", "w", "--out"])
        .arg(dir.path().join("runs"))
        .arg("--dataset")
        .arg(&stem)
        .output()
        .unwrap();
    assert!(!bad_workers.status.success());
    assert!(String::from_utf8_lossy(&bad_workers.stderr).contains("CLAPROBE_WORKERS"));
}
