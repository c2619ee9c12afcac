#![allow(dead_code)]

use ergodic_control::catalog;
use ergodic_control::{Problem, ProblemConfig, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn catalog_problem(name: &str) -> Problem {
    catalog::entry(name).unwrap().problem().unwrap()
}

fn base(drift: String, diffusion: String, cost: String, u: (f64, f64, usize)) -> ProblemConfig {
    let mut c = ProblemConfig::from_toml(catalog::entry("ou").unwrap().toml).unwrap();
    c.drift = drift;
    c.diffusion = diffusion;
    c.cost = cost;
    (c.u_min, c.u_max, c.n_controls) = u;
    c.x_min = -12.0;
    c.x_max = 12.0;
    c.n_nodes = 3001;
    c.core_fraction = 0.75;
    c
}

/// Catalog families with randomly drawn parameters.
pub fn random_instance(rng: &mut ChaCha8Rng, family: usize) -> Problem {
    let mut r = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let config = match family % 4 {
        0 => base(
            format!("-{:.4}*u*x", r(0.5, 2.0)),
            format!("{:.4}", r(1.0, 1.6)),
            format!("x^2 + {:.4}*u", r(0.2, 2.0)),
            (1.0, 2.0, 101),
        ),
        1 => base(
            format!("-{:.4}*x", r(0.7, 1.5)),
            format!("{:.4}*u", r(0.6, 1.1)),
            format!("x^2 + {:.4}*u^2", r(0.0, 0.5)),
            (0.5, 2.0, 31),
        ),
        2 => {
            // the cubic drift would underflow the density on the wide domain
            let mut c = base(
                format!("u - {:.4}*x - {:.4}*x^3", r(0.5, 1.5), r(0.05, 0.3)),
                format!("1 + {:.4}*u^2", r(0.1, 0.6)),
                format!("x^2 + {:.4}*u^2 + {:.4}*cos(2*x)", r(0.2, 1.0), r(0.0, 0.5)),
                (-1.0, 1.0, 41),
            );
            (c.x_min, c.x_max, c.n_nodes) = (-8.0, 8.0, 4001);
            c
        }
        _ => base(
            format!("u - {:.4}*x", r(0.8, 1.5)),
            "sqrt(2)".into(),
            format!("x^2 + {:.4}*u^2 + {:.4}*abs(u)", r(0.3, 2.0), r(0.0, 0.5)),
            (-2.0, 2.0, 81),
        ),
    };
    Problem::from_config(config).unwrap()
}

/// Grid-valued strategy: constant pieces of random length and level.
pub fn random_strategy(rng: &mut ChaCha8Rng, p: &Problem) -> Strategy {
    let n = p.grid().len();
    let k = p.controls.len();
    let mut values = Vec::with_capacity(n);
    while values.len() < n {
        let len = rng.random_range(1..=n / 4 + 1);
        let u = p.controls.value(rng.random_range(0..k));
        values.extend(std::iter::repeat_n(u, len.min(n - values.len())));
    }
    Strategy::new(&p.controls, p.grid(), values).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `v - ⟨v, μ⟩` restricted to the core, compared in sup norm.
pub fn centered_sup_diff(
    p: &Problem,
    a: (
        &ergodic_control::ValueFunction,
        &ergodic_control::InvariantDensity,
    ),
    b: (
        &ergodic_control::ValueFunction,
        &ergodic_control::InvariantDensity,
    ),
) -> f64 {
    use ergodic_control::density::stationary_expectation;
    let ma = stationary_expectation(a.1, &a.0.v);
    let mb = stationary_expectation(b.1, &b.0.v);
    p.domain
        .core_nodes()
        .map(|i| ((a.0.v[i] - ma) - (b.0.v[i] - mb)).abs())
        .fold(0.0, f64::max)
}
