#![no_main]

use evscan_core::io::{decode_events, encode_events};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = decode_events(data) {
        let again = decode_events(&encode_events(&file)).expect("re-encoded stream decodes");
        assert_eq!(again, file);
    }
});
