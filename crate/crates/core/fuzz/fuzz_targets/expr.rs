#![no_main]

use ergodic_control::expr::Var;
use ergodic_control::CoefficientExpr;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(e) = CoefficientExpr::parse(text) else {
        return;
    };
    let _ = (e.uses(Var::U), e.uses(Var::X));
    for (u, x) in [
        (0.0, 0.0),
        (1.0, -2.5),
        (-0.5, 1e300),
        (f64::MIN_POSITIVE, -0.0),
    ] {
        let _ = e.eval(u, x);
    }
    let again = CoefficientExpr::parse(e.source()).expect("source reparses");
    assert_eq!(again, e);
});
