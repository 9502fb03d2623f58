mod oracle;

use std::collections::BTreeMap;

use agglofocus::contrast::{
    self, classify_agglomeration, contrast1, contrast2, ClassificationConfig, ContrastMethod,
    FocusSource,
};
use agglofocus::graph::{build_adjacency, masks_touch, AdjacencyGraph};
use agglofocus::interchange::{AggloClass, BinaryMask, FocusLevel, InstanceRecord, Role, Scene};
use proptest::prelude::*;

fn arb_scene() -> impl Strategy<Value = Scene> {
    (6u32..=20, 6u32..=20, 1usize..=6)
        .prop_flat_map(|(w, h, n)| {
            let inst = proptest::collection::vec((0..w, 0..h, 1u32..5, 1u32..5, any::<bool>()), n);
            (Just((w, h)), inst)
        })
        .prop_map(|((w, h), inst)| {
            let records = inst
                .into_iter()
                .enumerate()
                .map(|(i, (x0, y0, bw, bh, f))| {
                    let m = BinaryMask::from_fn(w, h, |x, y| {
                        x >= x0 && x < x0 + bw && y >= y0 && y < y0 + bh
                    })
                    .unwrap();
                    let focus = if f {
                        FocusLevel::InFocus
                    } else {
                        FocusLevel::OutOfFocus
                    };
                    InstanceRecord::new(i as u64 * 2 + 5, m).with_focus(focus)
                })
                .collect();
            Scene::new(w, h, Role::GroundTruth, records).unwrap()
        })
}

fn arb_graph() -> impl Strategy<Value = (AdjacencyGraph, BTreeMap<u64, f64>)> {
    (1u64..8).prop_flat_map(|n| {
        (
            proptest::collection::vec((0..n, 0..n), 0..12),
            proptest::collection::vec(any::<bool>(), n as usize),
        )
            .prop_map(move |(edges, levels)| {
                let g = AdjacencyGraph::from_edges(0..n, edges, 2).unwrap();
                let f = levels
                    .into_iter()
                    .enumerate()
                    .map(|(i, b)| (i as u64, if b { 1.0 } else { 0.0 }))
                    .collect();
                (g, f)
            })
    })
}

fn levels(f: &BTreeMap<u64, f64>) -> BTreeMap<u64, FocusLevel> {
    f.iter()
        .map(|(&k, &v)| {
            let l = if v == 1.0 {
                FocusLevel::InFocus
            } else {
                FocusLevel::OutOfFocus
            };
            (k, l)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn edges_match_pairwise_gap(s in arb_scene(), r in 0u32..4) {
        let g = build_adjacency(&s, r);
        let inst = s.instances();
        for a in inst {
            for b in inst {
                if a.id == b.id {
                    continue;
                }
                let gap = oracle::chebyshev_gap(&oracle::pixel_set(&a.mask), &oracle::pixel_set(&b.mask));
                prop_assert_eq!(g.has_edge(a.id, b.id), gap <= r);
                prop_assert_eq!(masks_touch(&a.mask, &b.mask, r), masks_touch(&b.mask, &a.mask, r));
            }
        }
    }

    #[test]
    fn edges_grow_with_radius(s in arb_scene(), r in 0u32..4) {
        let small = build_adjacency(&s, r);
        let big = build_adjacency(&s, r + 1);
        prop_assert!(small.edges().is_subset(big.edges()));
    }

    #[test]
    fn swapping_levels_keeps_contrast2((g, f) in arb_graph()) {
        let l = levels(&f);
        let swapped: BTreeMap<u64, FocusLevel> = l.iter().map(|(&k, v)| (k, v.flipped())).collect();
        for &id in g.nodes() {
            prop_assert_eq!(
                contrast2(&l, &g, id).unwrap().contrast,
                contrast2(&swapped, &g, id).unwrap().contrast
            );
        }
    }

    #[test]
    fn single_neighbour_contrasts_agree((g, f) in arb_graph()) {
        let l = levels(&f);
        for &id in g.nodes() {
            if g.neighbors(id).unwrap().len() == 1 {
                prop_assert_eq!(
                    contrast1(&f, &g, id).unwrap().contrast,
                    contrast2(&l, &g, id).unwrap().contrast
                );
            }
            let c1 = contrast1(&f, &g, id).unwrap().contrast;
            prop_assert!((0.0..=1.0).contains(&c1));
        }
    }

    #[test]
    fn isolated_instances_are_never_agglomerated(s in arb_scene()) {
        for method in [ContrastMethod::Contrast1, ContrastMethod::Contrast2] {
            let cfg = ClassificationConfig::default().with_method(method);
            let out = classify_agglomeration(&s, &cfg, None).unwrap();
            for inst in out.scene.instances() {
                if out.graph.neighbors(inst.id).unwrap().is_empty() {
                    prop_assert_eq!(inst.agglo, Some(AggloClass::NonAgglomerated));
                }
            }
        }
    }

    #[test]
    fn classify_leaves_input_untouched(s in arb_scene()) {
        let before = s.clone();
        let _ = classify_agglomeration(&s, &ClassificationConfig::default(), None).unwrap();
        prop_assert_eq!(s, before);
    }
}

#[test]
fn report_means_match_recomputation() {
    let gt_labels = [
        AggloClass::Agglomerated,
        AggloClass::Agglomerated,
        AggloClass::NonAgglomerated,
    ];
    let m = |x0: u32| BinaryMask::from_fn(12, 3, |x, _| x >= x0 && x < x0 + 3).unwrap();
    let scene = Scene::new(
        12,
        3,
        Role::GroundTruth,
        (0..3)
            .map(|i| InstanceRecord::new(i, m(i as u32 * 4)).with_agglo(gt_labels[i as usize]))
            .collect(),
    )
    .unwrap();
    let res = |id, c| contrast::ContrastResult {
        instance_id: id,
        contrast: c,
        method: ContrastMethod::Contrast1,
        neighbor_count: 1,
        focus_source: FocusSource::Label,
    };
    let results = vec![res(0, 0.2), res(1, 0.4), res(2, 0.8)];
    let report = contrast::contrast_report(&[scene], &[("m".to_string(), vec![results])]).unwrap();
    let m = report.method("m").unwrap();
    assert!((m.agglomerated.normalized_mean - 0.3 / 0.8).abs() < 1e-12);
    assert!((m.non_agglomerated.normalized_mean - 1.0).abs() < 1e-12);
    assert!((m.difference() - (1.0 - 0.375)).abs() < 1e-12);
}
