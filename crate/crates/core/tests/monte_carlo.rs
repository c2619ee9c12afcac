mod common;

use common::catalog_problem;
use ergodic_control::howard::solve;
use ergodic_control::mcsim::{cross_validate, simulate_average_cost, simulate_moment, SimConfig};
use ergodic_control::Strategy;

fn solved(name: &str) -> (ergodic_control::Problem, Strategy) {
    let p = catalog_problem(name);
    let a = solve(&p, &Strategy::initial(&p).unwrap()).unwrap().strategy;
    (p, a)
}

fn cfg(horizon: f64) -> SimConfig {
    SimConfig {
        horizon,
        burn_in: 50.0,
        ..SimConfig::default()
    }
}

#[test]
fn ornstein_uhlenbeck_reference_run() {
    let (p, a) = solved("ou");
    let e = simulate_average_cost(&p, &a, &SimConfig::default()).unwrap();
    assert!((e.mean - 1.0).abs() <= 3.0 * e.std_error, "{e:?}");
    assert!(e.std_error <= 0.02, "{e:?}");
    assert!(e.fraction_time_outside_core < 1e-3);
}

#[test]
fn starting_point_is_forgotten() {
    let (p, a) = solved("drift_control");
    let left = simulate_average_cost(
        &p,
        &a,
        &SimConfig {
            x0: Some(-3.0),
            ..cfg(500.0)
        },
    )
    .unwrap();
    let right = simulate_average_cost(
        &p,
        &a,
        &SimConfig {
            x0: Some(3.0),
            seed: 1,
            ..cfg(500.0)
        },
    )
    .unwrap();
    let combined = (left.std_error.powi(2) + right.std_error.powi(2)).sqrt();
    assert!(
        (left.mean - right.mean).abs() <= 3.0 * combined,
        "{left:?} {right:?}"
    );
}

#[test]
fn euler_bias_shrinks_with_the_step() {
    // one Brownian path, three step sizes; Euler inflates the OU variance by 1/(1 - Δ/2)
    let (p, a) = solved("ou");
    let means: Vec<f64> = [(4e-3, 4), (2e-3, 2), (1e-3, 1)]
        .iter()
        .map(|&(dt, k)| {
            let c = SimConfig {
                time_step: dt,
                noise_substeps: k,
                ..cfg(1000.0)
            };
            simulate_average_cost(&p, &a, &c).unwrap().mean
        })
        .collect();
    assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
    let ratio = (means[0] - means[1]) / (means[1] - means[2]);
    assert!((1.0..=4.0).contains(&ratio), "{means:?}");
}

#[test]
fn fourth_moment_is_stable() {
    let (p, a) = solved("ou");
    let short = simulate_moment(&p, &a, &cfg(500.0), 4).unwrap();
    let long = simulate_moment(&p, &a, &cfg(1000.0), 4).unwrap();
    assert!(short.mean.is_finite() && long.mean.is_finite());
    let combined = (short.std_error.powi(2) + long.std_error.powi(2)).sqrt();
    assert!(
        (short.mean - long.mean).abs() <= 4.0 * combined,
        "{short:?} {long:?}"
    );
    assert!(
        (long.mean - 3.0).abs() <= 4.0 * long.std_error + 0.05,
        "{long:?}"
    );
}

#[test]
fn verdict_survives_a_new_seed() {
    for name in ["ou", "diffusion_control"] {
        let (p, a) = solved(name);
        for seed in [3, 17] {
            let r = cross_validate(&p, &a, &SimConfig { seed, ..cfg(500.0) }).unwrap();
            assert!(r.passed, "{name} seed {seed}: {r:?}");
        }
    }
}

#[test]
fn mismatched_reference_fails() {
    // the quadrature value of another strategy is a negative control
    let (p, a) = solved("drift_control");
    let other = Strategy::constant(p.grid(), 2.0);
    let d = ergodic_control::compute_density(&p, &other).unwrap();
    let wrong = ergodic_control::density::average_cost(&p, &other, &d).unwrap();
    let r = ergodic_control::mcsim::cross_validate_against(&p, &a, &cfg(500.0), wrong).unwrap();
    assert!(!r.passed, "{r:?}");
}
