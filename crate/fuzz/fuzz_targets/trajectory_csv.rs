#![no_main]

use evscan_core::trajectory::Trajectory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(traj) = Trajectory::from_csv(text) {
        // Interpolation must hold up anywhere in the accepted time span.
        let _ = traj.pose_at(0.5 * (traj.start() + traj.end()), 0.0);
        let _ = traj.fixation_point();
    }
});
