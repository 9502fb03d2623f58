#![no_main]

use agglofocus::gray::GrayImage;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|bytes: &[u8]| {
    let _ = GrayImage::decode(bytes);
});
