#![no_main]

use ergodic_control::hjb::verify_solution;
use ergodic_control::io::{parse_table, value_from_table};
use ergodic_control::Problem;
use libfuzzer_sys::fuzz_target;

const PROBLEM: &str = r#"
drift = "-u*x"
diffusion = "sqrt(2)"
cost = "x^2 + u"
u_min = 1.0
u_max = 2.0
n_controls = 3
x_min = -2.0
x_max = 2.0
n_nodes = 5
"#;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(table) = parse_table(text) else { return };
    let _ = table.rows();
    let p = Problem::from_toml(PROBLEM).unwrap();
    if let Ok(vf) = value_from_table(&p, &table, 1.0) {
        let _ = verify_solution(&p, &vf, 1.0);
    }
});
