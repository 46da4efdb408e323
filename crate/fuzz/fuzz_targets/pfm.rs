#![no_main]

use evscan_core::io::decode_pfm;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_pfm(data);
});
