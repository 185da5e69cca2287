use proptest::prelude::*;
use proptest::strategy::Strategy as Gen;

use claprobe::labeling::{label_qa, rouge1};
use claprobe::metrics::{aggregate_seeds, auc_scores, macro_f1, pick_threshold, ScoreTable};
use claprobe::mitigation::{run_pipeline, AltKind, ResponsePair, Scored, Strategy};
use claprobe::numcore::{lr_at, DenseArray, LrSchedule};
use claprobe::probes::maxpool_features;

fn scored_labels(n: usize) -> impl Gen<Value = (Vec<f64>, Vec<u8>)> {
    prop::collection::vec((-5.0f64..5.0, 0u8..2), 2..n).prop_filter("both classes", |v| {
        v.iter().any(|(_, l)| *l == 1) && v.iter().any(|(_, l)| *l == 0)
    })
    .prop_map(|v| v.into_iter().unzip())
}

fn pairs() -> impl Gen<Value = Vec<ResponsePair>> {
    prop::collection::vec((0u8..2, 0.0f64..1.0, 0u8..2, 0.0f64..1.0), 1..60).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (gl, gs, al, as_))| ResponsePair {
                prompt_id: i as u64,
                greedy: Scored { label: gl, score: gs },
                alternate: Some(Scored { label: al, score: as_ }),
                alt_kind: AltKind::RandomSample,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn auc_is_rank_based((scores, labels) in scored_labels(80), a in 0.1f64..10.0, b in -3.0f64..3.0) {
        let base = auc_scores(&scores, &labels).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        prop_assert!((auc_scores(&affine, &labels).unwrap() - base).abs() < 1e-12);
        prop_assert!((auc_scores(&exp, &labels).unwrap() - base).abs() < 1e-12);
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auc_scores(&neg, &labels).unwrap() + base - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn picked_threshold_reports_its_own_f1((scores, labels) in scored_labels(60)) {
        let t = pick_threshold(&ScoreTable::from_scores(&scores, &labels)).unwrap();
        let preds: Vec<u8> = scores.iter().map(|&s| t.predict(s)).collect();
        prop_assert!((macro_f1(&preds, &labels).unwrap() - t.macro_f1).abs() < 1e-12);
    }

    #[test]
    fn seed_summary_ignores_order(mut runs in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let a = aggregate_seeds(&runs).unwrap();
        runs.reverse();
        let b = aggregate_seeds(&runs).unwrap();
        prop_assert!((a.mean - b.mean).abs() < 1e-12 && (a.std - b.std).abs() < 1e-12);
    }

    #[test]
    fn rouge_bounded_and_extra_golds_never_hurt(
        resp in "[a-c ]{0,20}",
        g1 in "[a-c]{1,3}( [a-c]{1,3}){0,3}",
        g2 in "[a-c]{1,3}( [a-c]{1,3}){0,3}",
    ) {
        let one = rouge1(&resp, &[&g1]).unwrap();
        let two = rouge1(&resp, &[&g1, &g2]).unwrap();
        prop_assert!((0.0..=1.0).contains(&one));
        prop_assert!(two >= one);
        prop_assert!(label_qa(&resp, &[&g1, &g2]).unwrap() <= label_qa(&resp, &[&g1]).unwrap());
    }

    #[test]
    fn mitigation_report_ignores_pair_order(mut p in pairs(), t in 0.0f64..1.0) {
        let a = run_pipeline(&p, t, &Strategy::ALL).unwrap();
        p.reverse();
        let b = run_pipeline(&p, t, &Strategy::ALL).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn double_check_abstains_no_more_than_plain_abstention(p in pairs(), t in 0.0f64..1.0) {
        let r = run_pipeline(&p, t, &[Strategy::DefAbstain, Strategy::ClapII]).unwrap();
        let da = r.get(Strategy::DefAbstain).unwrap();
        let cii = r.get(Strategy::ClapII).unwrap();
        prop_assert!(cii.n_abstained <= da.n_abstained);
        prop_assert!(cii.n_abstained_but_nh <= da.n_abstained_but_nh);
    }

    #[test]
    fn oracle_scores_make_emitted_output_clean(mut p in pairs()) {
        for pair in &mut p {
            pair.greedy.score = f64::from(pair.greedy.label);
            if let Some(a) = pair.alternate.as_mut() {
                a.score = f64::from(a.label);
            }
        }
        let r = run_pipeline(&p, 0.5, &[Strategy::Def, Strategy::ClapI, Strategy::ClapII]).unwrap();
        let cii = r.get(Strategy::ClapII).unwrap();
        prop_assert_eq!(cii.n_emitted_nh, cii.n_emitted);
        prop_assert_eq!(cii.nh_to_h, 0);
        prop_assert!(r.get(Strategy::ClapI).unwrap().n_emitted_nh >= r.get(Strategy::Def).unwrap().n_emitted_nh);
    }

    #[test]
    fn never_flagging_reduces_to_default(p in pairs()) {
        let r = run_pipeline(&p, 2.0, &Strategy::ALL).unwrap();
        let def = r.get(Strategy::Def).unwrap();
        for s in [Strategy::DefAbstain, Strategy::ClapI, Strategy::ClapII] {
            let x = r.get(s).unwrap();
            prop_assert_eq!(x.n_emitted_nh, def.n_emitted_nh);
            prop_assert_eq!(x.n_abstained, 0);
        }
    }

    #[test]
    fn schedule_rises_then_falls(peak in 1e-6f64..1e-2, warmup in 0usize..10, extra in 1usize..60) {
        let s = LrSchedule { peak_lr: peak, warmup_epochs: warmup, max_epochs: warmup + extra };
        let lrs: Vec<f64> = (0..s.max_epochs).map(|e| lr_at(e, &s).unwrap()).collect();
        prop_assert!(lrs.iter().all(|&l| (0.0..=peak * (1.0 + 1e-12)).contains(&l)));
        prop_assert!(lrs[..warmup].windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(lrs[warmup..].windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn maxpool_dominates_every_layer(rows in 1usize..6, width in 1usize..6, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..rows * width).map(|_| rng.random_range(-3.0..3.0)).collect();
        let acts = DenseArray::from_vec(&[rows, width], data.clone()).unwrap();
        let pooled = maxpool_features(&acts).unwrap();
        for (j, &m) in pooled.iter().enumerate() {
            prop_assert!((0..rows).all(|i| data[i * width + j] <= m));
            prop_assert!((0..rows).any(|i| data[i * width + j] == m));
        }
    }
}
