#![no_main]

use libfuzzer_sys::fuzz_target;
use optreg::plant::parse_plant_source;

fuzz_target!(|data: &str| {
    if let Ok(source) = parse_plant_source(data) {
        // Anything that parses must either reduce or fail with an error.
        let _ = source.to_plant(None);
    }
});
