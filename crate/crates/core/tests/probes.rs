use claprobe::actdata::{synth_planted, ActivationRecord, Dataset, HeadSignal, Split, SynthParams};
use claprobe::metrics::{auc_scores, run_matrix, MatrixConfig, MatrixMode, NamedDataset};
use claprobe::probes::{
    ah_best_head, clap_train, lp_score, lp_train, nlp_train, project_concat_train, read_checkpoint, score_records,
    write_checkpoint, ClapConfig, Detector, LayerProbeSuite, MlpNet, SelectionMode, TrainConfig, TrainedProbe,
};

fn planted(signal_layer: usize, seed: u64) -> Dataset {
    synth_planted(&SynthParams {
        signal_layer,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn hyper(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        patience: Some(5),
        ..Default::default()
    }
}

fn labels(records: &[&ActivationRecord]) -> Vec<u8> {
    records.iter().map(|r| r.label).collect()
}

fn test_auc(probe: &TrainedProbe, ds: &Dataset) -> f64 {
    let test = ds.split(Split::Test);
    auc_scores(&score_records(probe, &test).unwrap(), &labels(&test)).unwrap()
}

#[test]
fn linear_probe_separable_at_planted_layer_chance_elsewhere() {
    let top = planted(8, 0);
    let p = lp_train(&top.split(Split::Train), &top.split(Split::Val), 8, &hyper(0)).unwrap();
    assert!(test_auc(&p, &top) > 0.99);
    let rec = top.split(Split::Test)[0];
    let s = lp_score(&p, rec).unwrap();
    assert!(s > 0.0 && s < 1.0);

    let mid = planted(4, 0);
    for seed in 0..3 {
        let p = lp_train(&mid.split(Split::Train), &mid.split(Split::Val), 8, &hyper(seed)).unwrap();
        let a = test_auc(&p, &mid);
        assert!((a - 0.5).abs() <= 0.05, "seed {seed}: {a}");
    }
}

#[test]
fn linear_probe_memorizes_one_example() {
    let ds = planted(4, 1);
    let one = &ds.split(Split::Train)[..1];
    let h = TrainConfig { lr: 0.5, ..Default::default() };
    let p = lp_train(one, &[], 4, &h).unwrap();
    assert!(p.history.epochs.last().unwrap().train_loss < 0.01);
}

#[test]
fn layer_out_of_range_rejected() {
    let ds = planted(4, 1);
    let tr = ds.split(Split::Train);
    assert!(lp_train(&tr, &[], 0, &hyper(0)).is_err());
    assert!(lp_train(&tr, &[], 9, &hyper(0)).is_err());
}

#[test]
fn nonlinear_probe_mirrors_linear() {
    let top = planted(8, 2);
    let p = nlp_train(&top.split(Split::Train), &top.split(Split::Val), 8, &MlpNet::DEFAULT_HIDDEN, &hyper(0)).unwrap();
    assert!(test_auc(&p, &top) > 0.99);
    let mid = planted(4, 2);
    for seed in 0..3 {
        let p = nlp_train(&mid.split(Split::Train), &mid.split(Split::Val), 8, &MlpNet::DEFAULT_HIDDEN, &hyper(seed)).unwrap();
        let a = test_auc(&p, &mid);
        assert!((a - 0.5).abs() <= 0.05, "seed {seed}: {a}");
    }
}

#[test]
fn project_concat_recovers_mid_layer_signal() {
    let mid = planted(4, 3);
    for seed in 0..3 {
        let p = project_concat_train(&mid.split(Split::Train), &mid.split(Split::Val), 128, &hyper(seed)).unwrap();
        let a = test_auc(&p, &mid);
        assert!(a > 0.9, "seed {seed}: {a}");
    }
}

#[test]
fn clap_without_signal_stays_at_chance() {
    let mut ds = synth_planted(&SynthParams {
        signal_strength: 0.0,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let cfg = ClapConfig { d_model: 32, ..Default::default() };
    let p = clap_train(&ds.split(Split::Train), &ds.split(Split::Val), &cfg, &hyper(0)).unwrap();
    let first = p.history.epochs[0].train_loss;
    let best = p.history.best().unwrap();
    assert!((first - std::f64::consts::LN_2).abs() < 0.05, "first epoch loss {first}");
    assert!((best.train_loss - std::f64::consts::LN_2).abs() < 0.05, "kept epoch loss {}", best.train_loss);

    // Planted data with shuffled labels: no signal survives.
    ds = planted(4, 5);
    let mut labels: Vec<u8> = ds.records.iter().map(|r| r.label).collect();
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    labels.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(9));
    for (r, l) in ds.records.iter_mut().zip(labels) {
        r.label = l;
    }
    let p = clap_train(&ds.split(Split::Train), &ds.split(Split::Val), &cfg, &hyper(0)).unwrap();
    let a = test_auc(&p, &ds);
    assert!((0.45..=0.55).contains(&a), "shuffled-label AUC {a}");
}

#[test]
fn fixed_seed_gives_identical_parameters() {
    let ds = synth_planted(&SynthParams {
        n_prompts: 200,
        ..Default::default()
    })
    .unwrap();
    let cfg = ClapConfig { d_model: 16, ..Default::default() };
    let h = TrainConfig {
        max_epochs: 7,
        ..Default::default()
    };
    let (tr, va) = (ds.split(Split::Train), ds.split(Split::Val));
    let a = clap_train(&tr, &va, &cfg, &h).unwrap();
    let b = clap_train(&tr, &va, &cfg, &h).unwrap();
    assert_eq!(a.params, b.params);
    let c = clap_train(&tr, &va, &cfg, &h.with_seed(1)).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn head_search_finds_planted_head() {
    for seed in 0..3 {
        let ds = synth_planted(&SynthParams {
            n_layers: 4,
            d_llm: 8,
            n_prompts: 600,
            seed,
            heads: Some(HeadSignal {
                n_heads: 4,
                d_head: 4,
                layer: 2,
                head: 3,
            }),
            ..Default::default()
        })
        .unwrap();
        let sel = ah_best_head(&ds.split(Split::Train), &ds.split(Split::Val), &hyper(seed)).unwrap();
        assert_eq!((sel.layer, sel.head), (2, 3), "seed {seed}");
        assert!(sel.val_auc.unwrap() > 0.95);
    }
    let single = synth_planted(&SynthParams {
        n_layers: 1,
        d_llm: 4,
        n_prompts: 200,
        signal_layer: 1,
        heads: Some(HeadSignal {
            n_heads: 1,
            d_head: 2,
            layer: 1,
            head: 1,
        }),
        ..Default::default()
    })
    .unwrap();
    let sel = ah_best_head(&single.split(Split::Train), &single.split(Split::Val), &hyper(0)).unwrap();
    assert_eq!((sel.layer, sel.head), (1, 1));
}

#[test]
fn head_search_on_noise_and_missing_heads() {
    let ds = synth_planted(&SynthParams {
        n_layers: 2,
        d_llm: 4,
        n_prompts: 2000,
        signal_layer: 1,
        signal_strength: 0.0,
        heads: Some(HeadSignal {
            n_heads: 2,
            d_head: 4,
            layer: 1,
            head: 1,
        }),
        ..Default::default()
    })
    .unwrap();
    let sel = ah_best_head(&ds.split(Split::Train), &ds.split(Split::Val), &hyper(0)).unwrap();
    let test = ds.split(Split::Test);
    let a = auc_scores(&score_records(&sel.probe, &test).unwrap(), &labels(&test)).unwrap();
    assert!((a - 0.5).abs() < 0.07, "noise head test AUC {a}");

    let plain = planted(4, 0);
    assert!(matches!(
        ah_best_head(&plain.split(Split::Train), &[], &hyper(0)),
        Err(claprobe::Error::Unsupported(_))
    ));
}

#[test]
fn layer_suite_selection_and_checkpoint_round_trip() {
    let ds = synth_planted(&SynthParams {
        n_prompts: 800,
        signal_layer: 3,
        ..Default::default()
    })
    .unwrap();
    let suite = LayerProbeSuite::train(&ds.split(Split::Train), &ds.split(Split::Val), &hyper(0)).unwrap();
    assert_eq!(suite.n_layers(), 8);
    assert_eq!(suite.ma_layer, 3);
    let test = ds.split(Split::Test);
    let y = labels(&test);
    let score = |mode| {
        let s: Vec<f64> = suite.predict_many(mode, &test).unwrap().iter().map(|p| p.score).collect();
        auc_scores(&s, &y).unwrap()
    };
    assert!(score(SelectionMode::Ma) > 0.99);
    assert!((score(SelectionMode::Last) - 0.5).abs() < 0.1);

    let det = Detector::Suite(suite, SelectionMode::Mc);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("suite.ckpt");
    write_checkpoint(&path, &det, &ds.fingerprint(), 0).unwrap();
    let (header, back) = read_checkpoint(&path).unwrap();
    assert_eq!(header.networks.len(), 8);
    assert_eq!(back, det);
    assert_eq!(back.score(&test).unwrap(), det.score(&test).unwrap());
}

#[test]
fn predictive_entropy_detector_needs_logprobs() {
    let ds = synth_planted(&SynthParams {
        n_prompts: 400,
        logprob_shift: Some(1.0),
        ..Default::default()
    })
    .unwrap();
    let test = ds.split(Split::Test);
    let s = Detector::PredictiveEntropy.score(&test).unwrap();
    assert!(s.iter().all(|&x| x >= 0.0));
    assert!(auc_scores(&s, &labels(&test)).unwrap() > 0.8);
    let plain = planted(4, 0);
    assert!(Detector::PredictiveEntropy.score(&plain.split(Split::Test)).is_err());
}

#[test]
fn layer_shift_hurts_ma_but_not_position_free_clap() {
    let make = |layer| NamedDataset {
        name: format!("l{layer}"),
        dataset: synth_planted(&SynthParams {
            n_prompts: 1000,
            signal_layer: layer,
            seed: layer as u64,
            direction_seed: Some(77),
            ..Default::default()
        })
        .unwrap(),
    };
    let datasets = [make(2), make(6)];
    let config = MatrixConfig {
        train: hyper(0),
        clap: vec![(
            "clap_nopos".into(),
            ClapConfig {
                d_model: 32,
                positional_embeddings: false,
                ..Default::default()
            },
        )],
        seeds: vec![0],
        ..Default::default()
    };
    let report = run_matrix(&datasets, &config, MatrixMode::Ood).unwrap();
    assert_eq!(report.pairs.len(), 2);
    for (tr, te) in [("l2", "l6"), ("l6", "l2")] {
        let ma = report.column(tr, te, "ma").unwrap().mean;
        let clap = report.column(tr, te, "clap_nopos").unwrap().mean;
        assert!(ma < 0.6 && clap > ma + 0.2, "{tr}->{te}: ma {ma}, clap {clap}");
    }
    assert!(report.to_csv().starts_with("model,train_set,test_set,probe,seed,auc\n"));
}

#[test]
fn matrix_rejects_mismatched_shapes() {
    let a = NamedDataset {
        name: "a".into(),
        dataset: synth_planted(&SynthParams { n_prompts: 50, ..Default::default() }).unwrap(),
    };
    let b = NamedDataset {
        name: "b".into(),
        dataset: synth_planted(&SynthParams {
            n_prompts: 50,
            d_llm: 16,
            ..Default::default()
        })
        .unwrap(),
    };
    let err = run_matrix(&[a, b], &MatrixConfig::default(), MatrixMode::Ood).unwrap_err();
    assert!(matches!(err, claprobe::Error::Incompatible(_)));
}
