#![no_main]

use ergodic_control::io::{read_table, strategy_from_table};
use ergodic_control::{evaluate, Problem};
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
    let Ok(table) = read_table(data) else { return };
    let p = Problem::from_toml(PROBLEM).unwrap();
    if let Ok(a) = strategy_from_table(&p, &table) {
        let _ = evaluate(&p, &a);
    }
});
