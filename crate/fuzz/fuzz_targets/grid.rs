#![no_main]

use evscan_core::io::decode_grid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_grid(data);
});
