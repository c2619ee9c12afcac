#![no_main]

use ergodic_control::{validate_problem, Problem, ProblemConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(config) = ProblemConfig::from_toml(text) else {
        return;
    };
    if config.n_nodes > 20_000 || config.n_controls > 1_000 {
        return;
    }
    if let Ok(p) = Problem::from_config(config) {
        let _ = validate_problem(&p).into_result();
    }
});
