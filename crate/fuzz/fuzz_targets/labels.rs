#![no_main]

use evscan_core::io::{decode_labels, encode_labels};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((w, h, labels)) = decode_labels(data) {
        assert_eq!(decode_labels(&encode_labels(w, h, &labels)).unwrap(), (w, h, labels));
    }
});
