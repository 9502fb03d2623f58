mod oracle;

use agglofocus::interchange::{save_scene, AggloClass, BinaryMask, InstanceRecord, Role, Scene};
use agglofocus::metrics::{
    self, match_instances, AccDenominator, Average, EvalOptions, MetricsError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

#[test]
fn single_scene_matching_equals_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let (gt, pred) = oracle::random_pair(&mut rng, 6);
        for class_aware in [false, true] {
            let got = match_instances(&gt, &pred, 0.5, class_aware).unwrap();
            let g = oracle::insts(&gt);
            let p = oracle::insts(&pred);
            let mut want: Vec<(u64, u64)> = oracle::exhaustive_matching(&g, &p, 0.5, class_aware)
                .into_iter()
                .map(|(a, b)| (g[a].id, p[b].id))
                .collect();
            let mut have: Vec<(u64, u64)> =
                got.pairs.iter().map(|m| (m.gt_id, m.pred_id)).collect();
            want.sort_unstable();
            have.sort_unstable();
            assert_eq!(have, want);
        }
    }
}

#[test]
fn corpus_scores_equal_reference_per_scene_and_pooled() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pairs: Vec<(Scene, Scene)> = (0..60).map(|_| oracle::random_pair(&mut rng, 5)).collect();
    for (gt, pred) in &pairs {
        let r = metrics::evaluate_scenes(
            &[("s".to_string(), gt.clone(), pred.clone())],
            &EvalOptions::default(),
        )
        .unwrap();
        let want = oracle::reference_scores(&[(gt.clone(), pred.clone())], 0.5);
        assert!(close(r.acc, want.acc), "acc {} vs {}", r.acc, want.acc);
        assert!(close(r.f1, want.f1));
        assert!(close(r.ap, want.ap), "ap {} vs {}", r.ap, want.ap);
        assert!(close(r.pixel_iou, want.pixel_iou));
    }
    let named: Vec<_> = pairs
        .iter()
        .enumerate()
        .map(|(i, (g, p))| (format!("{i:03}"), g.clone(), p.clone()))
        .collect();
    let r = metrics::evaluate_scenes(&named, &EvalOptions::default()).unwrap();
    let want = oracle::reference_scores(&pairs, 0.5);
    assert!(close(r.acc, want.acc));
    assert!(close(r.f1, want.f1));
    assert!(close(r.precision, want.precision));
    assert!(close(r.recall, want.recall));
    assert!(close(r.pixel_iou, want.pixel_iou));
    assert!(close(r.ap, want.ap), "ap {} vs {}", r.ap, want.ap);
}

#[test]
fn per_scene_rows_follow_input_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let named: Vec<_> = (0..8)
        .map(|i| {
            let (g, p) = oracle::random_pair(&mut rng, 4);
            (format!("z{}", 8 - i), g, p)
        })
        .collect();
    let r = metrics::evaluate_scenes(&named, &EvalOptions::default()).unwrap();
    let names: Vec<_> = r.per_scene.iter().map(|s| s.name.clone()).collect();
    let want: Vec<_> = named.iter().map(|n| n.0.clone()).collect();
    assert_eq!(names, want);
}

fn block(x0: u32, x1: u32) -> BinaryMask {
    BinaryMask::from_fn(12, 4, |x, _| x >= x0 && x <= x1).unwrap()
}

#[test]
fn acc_denominator_and_micro_average() {
    let gt = Scene::new(
        12,
        4,
        Role::GroundTruth,
        vec![
            InstanceRecord::new(0, block(0, 2)).with_agglo(AggloClass::Agglomerated),
            InstanceRecord::new(1, block(5, 7)).with_agglo(AggloClass::NonAgglomerated),
        ],
    )
    .unwrap();
    let pred = Scene::new(
        12,
        4,
        Role::Prediction,
        vec![InstanceRecord::new(0, block(0, 2)).with_agglo(AggloClass::Agglomerated)],
    )
    .unwrap();
    let pairs = [("a".to_string(), gt, pred)];
    let matched = metrics::evaluate_scenes(&pairs, &EvalOptions::default()).unwrap();
    assert_eq!(matched.acc, 1.0);
    let over_gt = metrics::evaluate_scenes(
        &pairs,
        &EvalOptions {
            acc_denominator: AccDenominator::Gt,
            ..EvalOptions::default()
        },
    )
    .unwrap();
    assert_eq!(over_gt.acc, 0.5);
    let micro = metrics::evaluate_scenes(
        &pairs,
        &EvalOptions {
            average: Average::Micro,
            ..EvalOptions::default()
        },
    )
    .unwrap();
    // one TP, one FN overall
    assert_eq!((micro.precision, micro.recall), (1.0, 0.5));
    // macro: agg class perfect, non class recall 0
    assert_eq!(matched.recall, 0.5);
}

#[test]
fn corpus_reports_missing_counterparts_both_ways() {
    let gt_dir = tempfile::tempdir().unwrap();
    let pred_dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (g, p) = oracle::random_pair(&mut rng, 3);
    save_scene(&g, gt_dir.path().join("a.json")).unwrap();
    save_scene(&p, pred_dir.path().join("b.json")).unwrap();
    match metrics::evaluate_corpus(gt_dir.path(), pred_dir.path(), &EvalOptions::default()) {
        Err(MetricsError::MissingCounterparts(m)) => assert_eq!(m.len(), 2),
        other => panic!("unexpected {other:?}"),
    }
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(
        metrics::evaluate_corpus(empty.path(), empty.path(), &EvalOptions::default()),
        Err(MetricsError::NoScenes)
    ));
}

#[test]
fn scores_stay_in_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let n = rng.gen_range(1..4);
        let named: Vec<_> = (0..n)
            .map(|i| {
                let (g, p) = oracle::random_pair(&mut rng, 6);
                (i.to_string(), g, p)
            })
            .collect();
        let r = metrics::evaluate_scenes(&named, &EvalOptions::default()).unwrap();
        for v in [r.acc, r.f1, r.ap, r.pixel_iou, r.recall, r.precision] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
