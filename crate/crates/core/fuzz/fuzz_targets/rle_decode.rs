#![no_main]

use agglofocus::interchange::BinaryMask;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|input: (u8, u8, Vec<u16>)| {
    let (w, h, runs) = input;
    let runs: Vec<u64> = runs.into_iter().map(u64::from).collect();
    if let Ok(mask) = BinaryMask::from_runs(w as u32, h as u32, &runs) {
        let back = BinaryMask::from_runs(w as u32, h as u32, &mask.runs()).expect("re-decode");
        assert_eq!(back, mask);
    }
});
