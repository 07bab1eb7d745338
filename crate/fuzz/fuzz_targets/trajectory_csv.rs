#![no_main]

use libfuzzer_sys::fuzz_target;
use optreg::Trajectory;

fuzz_target!(|data: &str| {
    if let Ok(traj) = Trajectory::from_csv(data) {
        let text = traj.to_csv();
        let again = Trajectory::from_csv(&text).unwrap();
        assert_eq!(text, again.to_csv());
    }
});
