#![no_main]

use evscan_cli::config::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = toml::from_str::<Config>(text) else { return };
    if cfg.validate_sim().is_ok() {
        if let Ok(traj) = cfg.orbit.trajectory() {
            let _ = cfg.validate_carve(&traj);
        }
    }
});
