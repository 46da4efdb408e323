#![no_main]

use evscan_core::io::{decode_events_csv, encode_events_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(events) = decode_events_csv(text) {
        assert_eq!(decode_events_csv(&encode_events_csv(&events)).unwrap(), events);
    }
});
