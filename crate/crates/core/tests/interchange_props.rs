use agglofocus::interchange::{
    encode_rle, parse_scene, scene_to_json, AggloClass, BinaryMask, FocusLevel, InstanceRecord,
    Role, Scene,
};
use proptest::prelude::*;

fn arb_bits() -> impl Strategy<Value = (u32, u32, Vec<bool>)> {
    (1u32..=24, 1u32..=24).prop_flat_map(|(w, h)| {
        let n = (w * h) as usize;
        (
            Just(w),
            Just(h),
            proptest::collection::vec(any::<bool>(), n),
            0..n,
        )
            .prop_map(|(w, h, mut bits, i)| {
                bits[i] = true;
                (w, h, bits)
            })
    })
}

/// Row-major runs written out the long way.
fn naive_runs(bits: &[bool]) -> Vec<u64> {
    let mut runs = vec![0u64];
    let mut current = false;
    for &b in bits {
        if b == current {
            *runs.last_mut().unwrap() += 1;
        } else {
            runs.push(1);
            current = b;
        }
    }
    runs
}

fn arb_scene() -> impl Strategy<Value = Scene> {
    (4u32..=16, 4u32..=16, 0usize..5)
        .prop_flat_map(|(w, h, n)| {
            let inst = proptest::collection::vec(
                (
                    0..w,
                    0..h,
                    1u32..4,
                    1u32..4,
                    proptest::option::of(any::<bool>()),
                    proptest::option::of(any::<bool>()),
                    proptest::option::of(0.0f64..=1.0),
                ),
                n,
            );
            (Just((w, h)), inst, any::<bool>())
        })
        .prop_map(|((w, h), inst, pred)| {
            let records = inst
                .into_iter()
                .enumerate()
                .map(|(i, (x0, y0, bw, bh, focus, agg, score))| {
                    let mask = BinaryMask::from_fn(w, h, |x, y| {
                        x >= x0 && x < x0 + bw && y >= y0 && y < y0 + bh
                    })
                    .unwrap();
                    let mut r = InstanceRecord::new(i as u64 * 3 + 1, mask);
                    r.focus = focus.map(|f| {
                        if f {
                            FocusLevel::InFocus
                        } else {
                            FocusLevel::OutOfFocus
                        }
                    });
                    r.agglo = agg.map(|a| {
                        if a {
                            AggloClass::Agglomerated
                        } else {
                            AggloClass::NonAgglomerated
                        }
                    });
                    r.score = score.map(|s| (s * 1e6).round() / 1e6);
                    r
                })
                .collect();
            let role = if pred {
                Role::Prediction
            } else {
                Role::GroundTruth
            };
            Scene::new(w, h, role, records)
                .unwrap()
                .with_image_path("img.png")
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn rle_round_trip((w, h, bits) in arb_bits()) {
        let m = encode_rle(w, h, &bits).unwrap();
        let runs = m.runs();
        prop_assert_eq!(&runs, &naive_runs(&bits));
        prop_assert_eq!(runs.iter().sum::<u64>(), (w * h) as u64);
        prop_assert!(runs.iter().skip(1).all(|&r| r > 0));
        let back = BinaryMask::from_runs(w, h, &runs).unwrap();
        prop_assert_eq!(back.as_slice(), &bits[..]);
    }

    #[test]
    fn scene_json_round_trip(s in arb_scene()) {
        let text = scene_to_json(&s).unwrap();
        prop_assert!(text.ends_with('\n'));
        prop_assert_eq!(text.matches('\n').count(), 1);
        let back = parse_scene(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(scene_to_json(&back).unwrap(), text);
    }
}

#[test]
fn keys_are_sorted_and_version_is_written() {
    let m = BinaryMask::from_pixels(3, 2, [(1, 0), (2, 0), (0, 1)]).unwrap();
    let s = Scene::new(
        3,
        2,
        Role::GroundTruth,
        vec![InstanceRecord::new(7, m)
            .with_focus(FocusLevel::InFocus)
            .with_agglo(AggloClass::NonAgglomerated)],
    )
    .unwrap();
    assert_eq!(
        scene_to_json(&s).unwrap(),
        "{\"height\":2,\"image_path\":null,\"instances\":[{\"agglo\":\"non\",\"bbox\":[0,0,2,1],\
         \"focus\":\"in\",\"id\":7,\"rle\":[1,3,2],\"score\":null}],\"role\":\"gt\",\"version\":1,\
         \"width\":3}\n"
    );
}

#[test]
fn malformed_scenes_are_rejected() {
    let ok = r#"{"height":1,"image_path":null,"instances":[{"agglo":null,"bbox":[1,0,1,0],"focus":null,"id":0,"rle":[1,1,1],"score":null}],"role":"pred","version":1,"width":3}"#;
    assert!(parse_scene(ok).is_ok());
    for bad in [
        ok.replace("\"version\":1", "\"version\":2"),
        ok.replace("[1,1,1]", "[1,1,2]"),
        ok.replace("[1,1,1]", "[1,0,0,1,1]"),
        ok.replace("[1,0,1,0]", "[0,0,1,0]"),
        ok.replace("\"score\":null", "\"score\":1.5"),
        ok.replace("\"pred\"", "\"other\""),
        ok.replace("[1,1,1]", "[3]"),
        "{".to_string(),
    ] {
        assert!(parse_scene(&bad).is_err(), "accepted {bad}");
    }
}
