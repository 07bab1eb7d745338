#![no_main]

use libfuzzer_sys::fuzz_target;
use optreg_cli::{finalize, parse_run_config};

fuzz_target!(|data: &str| {
    let Ok(patch) = parse_run_config(data) else {
        return;
    };
    if let Ok(cfg) = finalize(patch) {
        let text = cfg.to_json().to_string();
        let again = finalize(parse_run_config(&text).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }
});
