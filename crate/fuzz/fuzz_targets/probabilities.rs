#![no_main]

use evscan_core::io::{decode_probabilities, encode_probabilities};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(probs) = decode_probabilities(data) {
        assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(decode_probabilities(&encode_probabilities(&probs)).unwrap(), probs);
    }
});
