//! Centered solution of the Poisson equation `L^α v + f^α - ρ^α = 0`.
//!
//! The equation is solved by quadrature, never by a linear solve. With
//! trapezoid masses `π_i = w_i p_i` the flux through the edge `(x_e, x_{e+1})`
//! is `H_e = Σ_{k ≤ e} π_k (f_k - ρ)`, and the edge slope is
//! `(v_{e+1} - v_e)/h = -H_e / (a_e p_e e^{s_e})` with `s = h b / (2a)`: the
//! integrating-factor formula `v' = -2H/(σ² p)` read at the edge midpoint.
//! `H_e` is summed from whichever end of the grid is nearer, so that both
//! numerator and denominator shrink together in the tails instead of the
//! numerator drowning in cancellation.

use crate::density::{InvariantDensity, NodeCoefficients, Strategy};
use crate::error::{Error, Result};
use crate::model::Problem;
use crate::numerics::{central_difference, fitted_coefficients, GridFunction};

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub v: GridFunction,
    pub dv: GridFunction,
    pub d2v: GridFunction,
    /// The average cost this bias function is centered against.
    pub rho: f64,
    pub strategy: Option<Strategy>,
    /// Nodes whose slope came from tail extrapolation.
    pub guarded_nodes: usize,
}

impl ValueFunction {
    /// Same derivatives, `v` shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            v: self.v.map(|x| x + c),
            ..self.clone()
        }
    }
}

pub fn solve_poisson(
    p: &Problem,
    alpha: &Strategy,
    d: &InvariantDensity,
    rho: f64,
) -> Result<ValueFunction> {
    let coeffs = NodeCoefficients::sample(p, alpha)?;
    solve_with(p, alpha, &coeffs, d, rho, p.grid().zero_node())
}

/// As [`solve_poisson`] but pinning `v` at `anchor` before centering.
pub fn solve_poisson_anchored(
    p: &Problem,
    alpha: &Strategy,
    d: &InvariantDensity,
    rho: f64,
    anchor: usize,
) -> Result<ValueFunction> {
    let coeffs = NodeCoefficients::sample(p, alpha)?;
    solve_with(p, alpha, &coeffs, d, rho, anchor)
}

pub(crate) fn solve_with(
    p: &Problem,
    alpha: &Strategy,
    coeffs: &NodeCoefficients,
    d: &InvariantDensity,
    rho: f64,
    anchor: usize,
) -> Result<ValueFunction> {
    let grid = p.grid();
    let n = grid.len();
    let h = grid.step();
    let mass = d.masses();
    let density = d.density.values();
    assert!(anchor < n, "anchor node out of range");

    let source: Vec<f64> = (0..n).map(|i| mass[i] * (coeffs.cost[i] - rho)).collect();
    let total: f64 = source.iter().sum();
    let scale: f64 = 1.0 + (0..n).map(|i| mass[i] * coeffs.cost[i].abs()).sum::<f64>();
    let tolerance = p.tolerances.rho_tol * scale;
    if total.abs() > tolerance {
        return Err(Error::NotCentered {
            imbalance: total,
            tolerance,
        });
    }

    // flux through each edge, accumulated from the nearer end
    let split = grid.zero_node();
    let mut flux = vec![0.0; n - 1];
    let mut acc = 0.0;
    for e in 0..split.min(n - 1) {
        acc += source[e];
        flux[e] = acc;
    }
    acc = 0.0;
    for e in (split..n - 1).rev() {
        acc += source[e + 1];
        flux[e] = -acc;
    }

    let floor = p.tolerances.p_floor;
    let mut slope = vec![f64::NAN; n - 1];
    let mut trusted = vec![false; n - 1];
    for e in 0..n - 1 {
        if density[e] < floor || density[e + 1] < floor {
            continue;
        }
        let a = coeffs.a(e);
        let s = 0.5 * h * coeffs.drift[e] / a;
        let value = -flux[e] / (a * density[e] * s.exp());
        if value.is_finite() {
            slope[e] = value;
            trusted[e] = true;
        }
    }
    let guarded = extrapolate_untrusted(&mut slope, &trusted)?;

    let mut v = vec![0.0; n];
    for e in anchor..n - 1 {
        v[e + 1] = v[e] + h * slope[e];
    }
    for e in (0..anchor).rev() {
        v[e] = v[e + 1] - h * slope[e];
    }
    let mean: f64 = v.iter().zip(&mass).map(|(v, m)| v * m).sum();
    v.iter_mut().for_each(|x| *x -= mean);

    let mut dv = vec![0.0; n];
    dv[0] = slope[0];
    dv[n - 1] = slope[n - 2];
    for i in 1..n - 1 {
        dv[i] = 0.5 * (slope[i - 1] + slope[i]);
    }
    // second derivative from the discrete equation itself
    let d2v: Vec<f64> = (0..n)
        .map(|i| {
            let (fa, fb) = fitted_coefficients(coeffs.a(i), coeffs.drift[i], h);
            -(coeffs.cost[i] - rho + fb * dv[i]) / fa
        })
        .collect();

    Ok(ValueFunction {
        v: GridFunction::new(grid, v),
        dv: GridFunction::new(grid, dv),
        d2v: GridFunction::new(grid, d2v),
        rho,
        strategy: Some(alpha.clone()),
        guarded_nodes: guarded,
    })
}

/// Fills untrusted edge slopes by linear extrapolation from the two nearest
/// trusted edges on the same side. Returns how many were filled.
fn extrapolate_untrusted(slope: &mut [f64], trusted: &[bool]) -> Result<usize> {
    let first = trusted.iter().position(|&t| t);
    let last = trusted.iter().rposition(|&t| t);
    let (first, last) = match (first, last) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Validation(
                "no grid edge carries density above p_floor".into(),
            ));
        }
    };
    let mut filled = 0;
    // interior gaps: linear interpolation between trusted neighbours
    let mut e = first;
    while e < last {
        if trusted[e] {
            e += 1;
            continue;
        }
        let lo = e - 1;
        let hi = (e..=last).find(|&j| trusted[j]).expect("last is trusted");
        for j in e..hi {
            let t = (j - lo) as f64 / (hi - lo) as f64;
            slope[j] = slope[lo] + t * (slope[hi] - slope[lo]);
            filled += 1;
        }
        e = hi;
    }
    let left_step = if first < last && trusted[first + 1] {
        slope[first + 1] - slope[first]
    } else {
        0.0
    };
    for j in 0..first {
        slope[j] = slope[first] - (first - j) as f64 * left_step;
        filled += 1;
    }
    let right_step = if last > first && trusted[last - 1] {
        slope[last] - slope[last - 1]
    } else {
        0.0
    };
    for j in last + 1..slope.len() {
        slope[j] = slope[last] + (j - last) as f64 * right_step;
        filled += 1;
    }
    Ok(filled)
}

/// `a·(dv)' + b·dv + f - ρ` with the raw coefficients and a central
/// difference of `dv`; independent of how `d2v` was obtained.
pub fn ode_residual(p: &Problem, alpha: &Strategy, vf: &ValueFunction) -> Result<GridFunction> {
    let coeffs = NodeCoefficients::sample(p, alpha)?;
    let d2v_fd = central_difference(&vf.dv, 1);
    let grid = p.grid();
    Ok(GridFunction::new(
        grid,
        (0..grid.len())
            .map(|i| coeffs.a(i) * d2v_fd[i] + coeffs.drift[i] * vf.dv[i] + coeffs.cost[i] - vf.rho)
            .collect(),
    ))
}
