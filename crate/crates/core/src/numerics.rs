//! Uniform grids, trapezoid quadrature and finite differences.

use serde::{Deserialize, Serialize};

/// A uniform grid `x_i = x_min + i (x_max - x_min) / (n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl Grid {
    /// Requires `x_min < x_max` and `n >= 2`; callers validate first.
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Self {
        assert!(x_min < x_max && n >= 2, "degenerate grid");
        Self { x_min, x_max, n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn step(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.x_max
        } else {
            self.x_min + (self.x_max - self.x_min) * i as f64 / (self.n - 1) as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    /// Node closest to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let t = ((x - self.x_min) / self.step()).round();
        if t.is_nan() || t <= 0.0 {
            0
        } else {
            (t as usize).min(self.n - 1)
        }
    }

    pub fn zero_node(&self) -> usize {
        self.nearest(0.0)
    }

    /// Same interval with `2n - 1` nodes (every spacing halved).
    pub fn refined(&self) -> Self {
        Self::new(self.x_min, self.x_max, 2 * self.n - 1)
    }
}

/// Samples of a function at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "one value per node");
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::new(grid, grid.points().into_iter().map(f).collect())
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::new(grid, vec![0.0; grid.len()])
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        Self::new(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Largest absolute value over the node range.
    pub fn sup_norm_over(&self, nodes: std::ops::Range<usize>) -> f64 {
        self.values[nodes].iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<usize> for GridFunction {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    LeftEnd,
    /// The node nearest to `x = 0`.
    ZeroNode,
}

/// Trapezoid cumulative integral, zero at the anchor node.
pub fn cumulative_integral(g: &GridFunction, from: Anchor) -> GridFunction {
    let grid = g.grid();
    let h = grid.step();
    let v = g.values();
    let anchor = match from {
        Anchor::LeftEnd => 0,
        Anchor::ZeroNode => grid.zero_node(),
    };
    let mut out = vec![0.0; v.len()];
    for i in anchor + 1..v.len() {
        out[i] = out[i - 1] + 0.5 * h * (v[i - 1] + v[i]);
    }
    for i in (0..anchor).rev() {
        out[i] = out[i + 1] - 0.5 * h * (v[i] + v[i + 1]);
    }
    GridFunction::new(grid, out)
}

/// Trapezoid rule over the whole grid.
pub fn integrate(g: &GridFunction) -> f64 {
    let v = g.values();
    let n = v.len();
    let inner: f64 = v[1..n - 1].iter().sum();
    g.grid().step() * (inner + 0.5 * (v[0] + v[n - 1]))
}

/// Central differences inside, second-order one-sided stencils at the ends.
pub fn central_difference(g: &GridFunction, order: u8) -> GridFunction {
    let grid = g.grid();
    let n = grid.len();
    assert!(n >= 3, "central differences need three nodes");
    let h = grid.step();
    let v = g.values();
    let mut out = vec![0.0; n];
    match order {
        1 => {
            for i in 1..n - 1 {
                out[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
            }
            out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
            out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
        }
        2 => {
            let h2 = h * h;
            for i in 1..n - 1 {
                out[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2;
            }
            if n >= 4 {
                out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
                out[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
            } else {
                out[0] = out[1];
                out[n - 1] = out[1];
            }
        }
        _ => panic!("difference order must be 1 or 2"),
    }
    GridFunction::new(grid, out)
}

/// Effective generator coefficients of the exponentially fitted three-point
/// stencil at spacing `h`.
///
/// For diffusion `a = σ²/2` and drift `b` the stencil
/// `(a/h²)·(e^{s} (v₊ - v) + e^{-s} (v₋ - v))` with `s = h b / (2a)` equals
/// `ã·D²v + b̃·D¹v` where `ã = a cosh s` and `b̃ = (2a/h) sinh s`. Both rates
/// stay positive for any drift, and the chain they define has the trapezoid
/// form of the explicit stationary density as its exact invariant law.
pub fn fitted_coefficients(a: f64, b: f64, h: f64) -> (f64, f64) {
    let s = 0.5 * h * b / a;
    if s.abs() < 1e-4 {
        // series keeps b̃ → b exactly as h → 0
        let s2 = s * s;
        (a * (1.0 + 0.5 * s2), b * (1.0 + s2 / 6.0))
    } else {
        (a * s.cosh(), 2.0 * a * s.sinh() / h)
    }
}

/// Polynomial envelope `g(x) <= C (1 + |x|^m)` fitted to non-negative samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub exponent: u32,
    pub constant: f64,
}

/// Least `m` in `0..=max_exponent` matching the growth of `|g(x) - g(x₀)|`
/// (`x₀` the sample nearest 0) between the inner half and the outer rim of
/// the sample range, with the constant `C` of `|g| ≤ C(1 + |x|^m)`. `None`
/// when the samples are not finite or grow faster.
pub fn polynomial_envelope(xs: &[f64], values: &[f64], max_exponent: u32) -> Option<Envelope> {
    assert_eq!(xs.len(), values.len());
    if xs.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let radius = xs.iter().fold(0.0f64, |r, x| r.max(x.abs()));
    let origin = xs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| values[i])
        .unwrap_or(0.0);
    let sup_where = |keep: &dyn Fn(f64) -> bool| {
        xs.iter()
            .zip(values)
            .filter(|(x, _)| keep(x.abs()))
            .fold(0.0f64, |m, (_, v)| m.max((v - origin).abs()))
    };
    let inner = sup_where(&|r| r <= 0.5 * radius);
    let outer = sup_where(&|r| r >= 0.95 * radius);
    let growth = if outer <= inner || radius <= 1.0 {
        0.0
    } else if inner == 0.0 {
        return None;
    } else {
        (outer / inner).log2()
    };
    let exponent = (growth - 1e-9).ceil().max(0.0);
    if exponent > max_exponent as f64 {
        return None;
    }
    let exponent = exponent as u32;
    let constant = xs
        .iter()
        .zip(values)
        .map(|(x, v)| v.abs() / (1.0 + x.abs().powi(exponent as i32)))
        .fold(0.0, f64::max);
    Some(Envelope { exponent, constant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn grid_geometry() {
        let g = Grid::new(-1.0, 1.0, 5);
        assert_eq!(g.points(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.zero_node(), 2);
        assert_eq!(g.nearest(10.0), 4);
        assert_eq!(g.nearest(-10.0), 0);
        assert_eq!(g.refined().len(), 9);
        assert_eq!(Grid::new(1.0, 3.0, 3).zero_node(), 0);
    }

    #[test]
    fn cumulative_of_constant_and_zero() {
        let grid = Grid::new(0.0, 1.0, 11);
        let c = cumulative_integral(&GridFunction::from_fn(grid, |_| 1.0), Anchor::LeftEnd);
        for (i, v) in c.values().iter().enumerate() {
            assert!(close(*v, i as f64 * 0.1, 1e-15));
        }
        let z = cumulative_integral(&GridFunction::zeros(grid), Anchor::LeftEnd);
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cumulative_of_identity() {
        let grid = Grid::new(0.0, 1.0, 101);
        let c = cumulative_integral(&GridFunction::from_fn(grid, |x| x), Anchor::LeftEnd);
        assert!(close(c[100], 0.5, 1e-4));
    }

    #[test]
    fn cumulative_zero_anchor() {
        let grid = Grid::new(-2.0, 2.0, 41);
        let c = cumulative_integral(&GridFunction::from_fn(grid, |x| x), Anchor::ZeroNode);
        assert_eq!(c[20], 0.0);
        // trapezoid is exact for linear integrands
        for (i, x) in grid.points().into_iter().enumerate() {
            assert!(close(c[i], 0.5 * x * x, 1e-13));
        }
    }

    #[test]
    fn integrate_examples() {
        let grid = Grid::new(-8.0, 8.0, 4001);
        assert!(close(
            integrate(&GridFunction::from_fn(grid, |_| 1.0)),
            16.0,
            1e-12
        ));
        let gauss = GridFunction::from_fn(grid, |x| {
            (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
        });
        assert!(close(integrate(&gauss), 1.0, 1e-8));
        let odd = GridFunction::from_fn(grid, |x| x * (-x * x).exp());
        assert!(close(integrate(&odd), 0.0, 1e-12));
    }

    #[test]
    fn differences() {
        let grid = Grid::new(-1.0, 1.0, 201);
        let sq = GridFunction::from_fn(grid, |x| x * x);
        let d2 = central_difference(&sq, 2);
        assert!(d2.values().iter().all(|&v| close(v, 2.0, 1e-9)));
        let d1 = central_difference(&sq, 1);
        for (i, x) in grid.points().into_iter().enumerate() {
            assert!(close(d1[i], 2.0 * x, 1e-12));
        }
        let flat = central_difference(&GridFunction::from_fn(grid, |_| 3.0), 1);
        assert!(flat.values().iter().all(|&v| v == 0.0));
        let h = grid.step();
        let sin = central_difference(&GridFunction::from_fn(grid, f64::sin), 1);
        assert!(close(sin[100], 1.0, h * h));
        let three = Grid::new(0.0, 2.0, 3);
        let d2 = central_difference(&GridFunction::from_fn(three, |x| x * x), 2);
        assert!(d2.values().iter().all(|&v| close(v, 2.0, 1e-12)));
    }

    #[test]
    fn fitted_coefficients_limit_and_identity() {
        let (a, b) = fitted_coefficients(1.0, 3.0, 1e-9);
        assert!(close(a, 1.0, 1e-15) && close(b, 3.0, 1e-14));
        // e^s·D⁺ - e^{-s}·D⁻ identity for the rates
        let (a0, b0, h) = (0.7, -2.3, 0.1);
        let (at, bt) = fitted_coefficients(a0, b0, h);
        let s = 0.5 * h * b0 / a0;
        let (vm, v0, vp) = (0.3, -0.1, 0.8);
        let chain = a0 / (h * h) * (s.exp() * (vp - v0) + (-s).exp() * (vm - v0));
        let split = at * (vp - 2.0 * v0 + vm) / (h * h) + bt * (vp - vm) / (2.0 * h);
        assert!(close(chain, split, 1e-12));
        // series branch agrees with the closed form at the switch
        let s_in = 0.999_999e-4;
        let (a1, b1) = fitted_coefficients(1.0, 2.0 * s_in, 1.0);
        assert!(close(a1, s_in.cosh(), 1e-15) && close(b1, 2.0 * s_in.sinh(), 1e-15));
    }

    #[test]
    fn envelopes() {
        let xs: Vec<f64> = (0..=160).map(|i| -8.0 + 0.1 * i as f64).collect();
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert_eq!(polynomial_envelope(&xs, &sq, 8).unwrap().exponent, 2);
        let flat = vec![3.0; xs.len()];
        let e = polynomial_envelope(&xs, &flat, 8).unwrap();
        assert_eq!((e.exponent, e.constant), (0, 1.5));
        let quartic: Vec<f64> = xs.iter().map(|x| 1.0 + x.powi(4)).collect();
        assert_eq!(polynomial_envelope(&xs, &quartic, 8).unwrap().exponent, 4);
        let wild: Vec<f64> = xs.iter().map(|x| (x * x).exp()).collect();
        assert!(polynomial_envelope(&xs, &wild, 8).is_none());
    }

    proptest! {
        #[test]
        fn integrate_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, k in 0.1f64..2.0) {
            let grid = Grid::new(-4.0, 4.0, 161);
            let g1 = GridFunction::from_fn(grid, |x| (-k * x * x).exp());
            let g2 = GridFunction::from_fn(grid, |x| x.sin() + x * x);
            let combo = g1.zip_with(&g2, |p, q| a * p + b * q);
            let lhs = integrate(&combo);
            let rhs = a * integrate(&g1) + b * integrate(&g2);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn difference_inverts_cumulative(c in 0.2f64..2.0, n in 100usize..400) {
            let grid = Grid::new(-2.0, 2.0, n);
            let g = GridFunction::from_fn(grid, |x| (c * x).sin() + x * x);
            let back = central_difference(&cumulative_integral(&g, Anchor::LeftEnd), 1);
            let h = grid.step();
            let err = back.zip_with(&g, |p, q| p - q).sup_norm_over(0..n);
            prop_assert!(err <= 2.0 * h * h * (1.0 + c * c * c), "err {err}");
        }
    }
}
