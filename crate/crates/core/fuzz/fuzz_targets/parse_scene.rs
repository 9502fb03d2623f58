#![no_main]

use agglofocus::interchange::{parse_scene, scene_to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    // anything that parses must survive a write/read round trip unchanged
    if let Ok(scene) = parse_scene(text) {
        let again = parse_scene(&scene_to_json(&scene).expect("serialize")).expect("re-parse");
        assert_eq!(again, scene);
    }
});
