#![no_main]

use agglofocus::augment::{parse_fraction_range, parse_kernels};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok((lo, hi)) = parse_fraction_range(text) {
        assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
    }
    if let Ok(kernels) = parse_kernels(text) {
        assert!(kernels.iter().all(|k| k % 2 == 1));
    }
});
