#![no_main]

use evscan_core::io::decode_model;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_model(data);
});
