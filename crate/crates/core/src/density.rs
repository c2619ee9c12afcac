//! Stationary law of the controlled diffusion under a fixed strategy.
//!
//! In one dimension the invariant density is explicit:
//! `p(x) = C σ(α(x), x)^{-2} exp(Λ(x))` with `Λ(x) = ∫₀ˣ 2b/σ² dy`. On the grid
//! `Λ` is the trapezoid cumulative integral anchored at the node nearest 0,
//! and `C` makes the trapezoid mass equal to one.

use crate::error::{Error, Result};
use crate::expr::CoefficientExpr;
use crate::model::{ControlSet, Problem};
use crate::numerics::{cumulative_integral, integrate, Anchor, Grid, GridFunction};

/// Stationary Markov control, one control value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    grid: Grid,
    values: Vec<f64>,
}

impl Strategy {
    /// Rejects values outside the control set.
    pub fn new(controls: &ControlSet, grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Strategy(format!(
                "{} values for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some((i, u)) = values
            .iter()
            .enumerate()
            .find(|(_, &u)| !u.is_finite() || !controls.contains(u))
        {
            return Err(Error::Strategy(format!(
                "value {u} at x = {} lies outside U = [{}, {}]",
                grid.x(i),
                controls.u_min,
                controls.u_max
            )));
        }
        let values = values.into_iter().map(|u| controls.clamp(u)).collect();
        Ok(Self { grid, values })
    }

    /// Projects every value onto the control interval.
    pub fn clamped(controls: &ControlSet, grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len());
        let values = values
            .into_iter()
            .map(|u| {
                if u.is_nan() {
                    controls.u_min
                } else {
                    controls.clamp(u)
                }
            })
            .collect();
        Self { grid, values }
    }

    pub fn constant(grid: Grid, u: f64) -> Self {
        Self {
            grid,
            values: vec![u; grid.len()],
        }
    }

    /// Evaluates an expression in `x` at every node; values must lie in `U`.
    pub fn from_expr(p: &Problem, expr: &CoefficientExpr) -> Result<Self> {
        let grid = p.grid();
        let values = grid
            .points()
            .into_iter()
            .map(|x| expr.eval(0.0, x))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(&p.controls, grid, values)
    }

    /// The configured initial strategy, or the constant `u_min`.
    pub fn initial(p: &Problem) -> Result<Self> {
        match &p.initial_strategy {
            Some(e) => Self::from_expr(p, e),
            None => Ok(Self::constant(p.grid(), p.controls.u_min)),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Piecewise-constant lookup: the value at the nearest node.
    pub fn at(&self, x: f64) -> f64 {
        self.values[self.grid.nearest(x)]
    }

    pub fn max_jump(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max)
    }

    /// Fraction of nodes where the two strategies differ.
    pub fn changed_fraction(&self, other: &Strategy) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        let changed = self
            .values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a != b)
            .count();
        changed as f64 / self.values.len() as f64
    }
}

/// `b^α`, `σ^α`, `f^α` sampled at the nodes.
#[derive(Debug, Clone)]
pub(crate) struct NodeCoefficients {
    pub drift: Vec<f64>,
    pub sigma: Vec<f64>,
    pub cost: Vec<f64>,
}

impl NodeCoefficients {
    pub fn sample(p: &Problem, alpha: &Strategy) -> Result<Self> {
        let grid = alpha.grid();
        if grid != p.grid() {
            return Err(Error::Strategy(
                "strategy grid differs from the problem grid".into(),
            ));
        }
        let n = grid.len();
        let mut out = Self {
            drift: Vec::with_capacity(n),
            sigma: Vec::with_capacity(n),
            cost: Vec::with_capacity(n),
        };
        for i in 0..n {
            let c = p.coefficients(alpha.value(i), grid.x(i))?;
            out.drift.push(c.drift);
            out.sigma.push(c.sigma);
            out.cost.push(c.cost);
        }
        Ok(out)
    }

    pub fn a(&self, i: usize) -> f64 {
        0.5 * self.sigma[i] * self.sigma[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantDensity {
    pub density: GridFunction,
    /// `C_α` of the explicit formula (with `Λ(anchor) = 0`).
    pub normalization_constant: f64,
    pub log_normalization_constant: f64,
    /// `Λ(x) = ∫₀ˣ 2b/σ² dy`.
    pub log_weight: GridFunction,
    /// Stationary mass outside the core region.
    pub tail_mass: f64,
}

impl InvariantDensity {
    /// Trapezoid masses `w_i p_i`; they sum to one.
    pub fn masses(&self) -> Vec<f64> {
        let grid = self.density.grid();
        self.density
            .values()
            .iter()
            .enumerate()
            .map(|(i, p)| grid.weight(i) * p)
            .collect()
    }
}

pub fn compute_density(p: &Problem, alpha: &Strategy) -> Result<InvariantDensity> {
    let coeffs = NodeCoefficients::sample(p, alpha)?;
    density_from_coefficients(p, &coeffs)
}

pub(crate) fn density_from_coefficients(
    p: &Problem,
    coeffs: &NodeCoefficients,
) -> Result<InvariantDensity> {
    let grid = p.grid();
    let beta = GridFunction::new(
        grid,
        coeffs
            .drift
            .iter()
            .zip(&coeffs.sigma)
            .map(|(b, s)| 2.0 * b / (s * s))
            .collect(),
    );
    let log_weight = cumulative_integral(&beta, Anchor::ZeroNode);
    if let Some(i) = log_weight.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteWeight { x: grid.x(i) });
    }
    let log_unnormalized: Vec<f64> = log_weight
        .values()
        .iter()
        .zip(&coeffs.sigma)
        .map(|(l, s)| l - (s * s).ln())
        .collect();
    let shift = log_unnormalized
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::NonFiniteWeight { x: grid.x(0) });
    }
    let unnormalized = GridFunction::new(
        grid,
        log_unnormalized.iter().map(|l| (l - shift).exp()).collect(),
    );
    let mass = integrate(&unnormalized);
    let density = unnormalized.map(|v| v / mass);
    let log_normalization_constant = -shift - mass.ln();

    let core = p.domain.core_nodes();
    let h = grid.step();
    let tail_mass: f64 = (0..grid.len() - 1)
        .filter(|&i| !(core.contains(&i) && core.contains(&(i + 1))))
        .map(|i| 0.5 * h * (density[i] + density[i + 1]))
        .sum();
    if tail_mass > p.tolerances.tail_mass_tol {
        return Err(Error::DomainTooSmall {
            tail_mass,
            tolerance: p.tolerances.tail_mass_tol,
        });
    }
    Ok(InvariantDensity {
        density,
        normalization_constant: log_normalization_constant.exp(),
        log_normalization_constant,
        log_weight,
        tail_mass,
    })
}

/// `⟨g, μ⟩` by the trapezoid rule.
pub fn stationary_expectation(d: &InvariantDensity, g: &GridFunction) -> f64 {
    integrate(&g.zip_with(&d.density, |a, b| a * b))
}

/// `ρ^α = ⟨f^α, μ^α⟩`.
pub fn average_cost(p: &Problem, alpha: &Strategy, d: &InvariantDensity) -> Result<f64> {
    let coeffs = NodeCoefficients::sample(p, alpha)?;
    Ok(average_cost_from(&coeffs, d))
}

pub(crate) fn average_cost_from(coeffs: &NodeCoefficients, d: &InvariantDensity) -> f64 {
    let cost = GridFunction::new(d.density.grid(), coeffs.cost.clone());
    stationary_expectation(d, &cost)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AdjointCheck {
    /// Sup over the core of `|(a p)'' - (b p)'|`.
    Computed { sup_core: f64 },
    /// The strategy jumps by more than the smoothness threshold.
    Skipped { max_jump: f64, threshold: f64 },
}

impl AdjointCheck {
    pub fn residual(&self) -> Option<f64> {
        match self {
            AdjointCheck::Computed { sup_core } => Some(*sup_core),
            AdjointCheck::Skipped { .. } => None,
        }
    }
}

/// Stationarity residual `(a p)'' - (b p)'` by central differences.
pub fn adjoint_residual(
    p: &Problem,
    alpha: &Strategy,
    d: &InvariantDensity,
) -> Result<AdjointCheck> {
    let max_jump = alpha.max_jump();
    let threshold = p.tolerances.strategy_jump_tol;
    if max_jump > threshold {
        log::info!("adjoint residual skipped: strategy jumps by {max_jump:.3e} > {threshold:.3e}");
        return Ok(AdjointCheck::Skipped {
            max_jump,
            threshold,
        });
    }
    let coeffs = NodeCoefficients::sample(p, alpha)?;
    let grid = p.grid();
    let ap = GridFunction::new(
        grid,
        (0..grid.len())
            .map(|i| coeffs.a(i) * d.density[i])
            .collect(),
    );
    let bp = GridFunction::new(
        grid,
        (0..grid.len())
            .map(|i| coeffs.drift[i] * d.density[i])
            .collect(),
    );
    let residual = crate::numerics::central_difference(&ap, 2)
        .zip_with(&crate::numerics::central_difference(&bp, 1), |x, y| x - y);
    Ok(AdjointCheck::Computed {
        sup_core: residual.sup_norm_over(p.domain.core_nodes()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProblemConfig;

    fn problem(
        drift: &str,
        diffusion: &str,
        cost: &str,
        u: (f64, f64, usize),
        n: usize,
    ) -> Problem {
        Problem::from_config(ProblemConfig {
            drift: drift.into(),
            diffusion: diffusion.into(),
            cost: cost.into(),
            u_min: u.0,
            u_max: u.1,
            n_controls: u.2,
            x_min: -8.0,
            x_max: 8.0,
            n_nodes: n,
            core_fraction: 0.5,
            rho_tol: 1e-9,
            residual_tol: 1e-6,
            tail_mass_tol: 1e-3,
            max_iterations: 50,
            p_floor: 1e-14,
            strategy_jump_tol: None,
            initial_strategy: None,
        })
        .unwrap()
    }

    #[test]
    fn ornstein_uhlenbeck_is_standard_normal() {
        let p = problem("-x", "sqrt(2)", "x*x", (0.0, 0.0, 1), 4001);
        let a = Strategy::initial(&p).unwrap();
        let d = compute_density(&p, &a).unwrap();
        let mid = p.grid().zero_node();
        assert!((d.density[mid] - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-6);
        assert!((integrate(&d.density) - 1.0).abs() < 1e-12);
        assert!(d.density.values().iter().all(|&v| v > 0.0));
        let one = GridFunction::from_fn(p.grid(), |_| 1.0);
        assert!((stationary_expectation(&d, &one) - 1.0).abs() < 1e-9);
        let x = GridFunction::from_fn(p.grid(), |x| x);
        assert!(stationary_expectation(&d, &x).abs() < 1e-8);
        let x2 = GridFunction::from_fn(p.grid(), |x| x * x);
        assert!((stationary_expectation(&d, &x2) - 1.0).abs() < 1e-6);
        assert!((average_cost(&p, &a, &d).unwrap() - 1.0).abs() < 1e-5);
        // C_α: p(0) = C/σ² with Λ(0) = 0
        assert!((d.normalization_constant / 2.0 - d.density[mid]).abs() < 1e-12);
    }

    #[test]
    fn diffusion_control_variance() {
        // b = -x, σ = u0: stationary variance u0²/2
        let p = problem("-x", "u", "x*x", (0.5, 2.0, 4), 6001)
            .with_config(|c| {
                c.x_min = -12.0;
                c.x_max = 12.0;
            })
            .unwrap();
        for &u0 in &[0.5, 1.0, 2.0] {
            let d = compute_density(&p, &Strategy::constant(p.grid(), u0)).unwrap();
            let x2 = GridFunction::from_fn(p.grid(), |x| x * x);
            assert!((stationary_expectation(&d, &x2) - u0 * u0 / 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn drift_control_average_cost() {
        // b = -u0 x, σ = √2: variance 1/u0
        let p = problem("-u*x", "sqrt(2)", "x*x", (0.5, 3.0, 6), 4001)
            .with_config(|c| c.core_fraction = 0.8)
            .unwrap();
        for &u0 in &[0.5, 1.0, 3.0] {
            let a = Strategy::constant(p.grid(), u0);
            let d = compute_density(&p, &a).unwrap();
            assert!((average_cost(&p, &a, &d).unwrap() - 1.0 / u0).abs() < 1e-5);
        }
    }

    #[test]
    fn laplace_density_ratio() {
        // the kink at 0 costs h/2 in the trapezoid sum, hence the fine grid
        let p = problem("-sign(x)", "sqrt(2)", "1", (0.0, 0.0, 1), 480_001)
            .with_config(|c| {
                c.x_min = -12.0;
                c.x_max = 12.0;
                c.core_fraction = 0.9;
            })
            .unwrap();
        let d = compute_density(&p, &Strategy::initial(&p).unwrap()).unwrap();
        let g = p.grid();
        let ratio = d.density[g.nearest(0.0)] / d.density[g.nearest(1.0)];
        assert!((ratio - std::f64::consts::E).abs() < 1e-4, "{ratio}");
    }

    #[test]
    fn constant_cost_is_exact() {
        let p = problem("-u*x", "sqrt(2)", "2.5", (1.0, 2.0, 3), 801);
        let a = Strategy::constant(p.grid(), 1.5);
        let d = compute_density(&p, &a).unwrap();
        assert!((average_cost(&p, &a, &d).unwrap() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn small_domain_is_flagged() {
        let p = problem("-0.01*x", "sqrt(2)", "1", (0.0, 0.0, 1), 401);
        let err = compute_density(&p, &Strategy::initial(&p).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DomainTooSmall { .. }));
    }

    #[test]
    fn adjoint_residual_smooth_and_flat() {
        let p = problem("-x", "sqrt(2)", "x*x", (0.0, 0.0, 1), 4001);
        let a = Strategy::initial(&p).unwrap();
        let d = compute_density(&p, &a).unwrap();
        let r = adjoint_residual(&p, &a, &d).unwrap().residual().unwrap();
        assert!((0.0..=1e-3).contains(&r), "{r}");

        let flat = p
            .with_config(|c| {
                c.drift = "0".into();
                c.diffusion = "1".into();
                c.tail_mass_tol = 1.0;
            })
            .unwrap();
        let a = Strategy::initial(&flat).unwrap();
        let d = compute_density(&flat, &a).unwrap();
        assert!(adjoint_residual(&flat, &a, &d).unwrap().residual().unwrap() <= 1e-10);
    }

    #[test]
    fn adjoint_residual_skips_jumpy_strategies() {
        let p = problem("-u*x", "sqrt(2)", "x*x", (1.0, 2.0, 2), 401);
        let vals = (0..401)
            .map(|i| if i % 2 == 0 { 1.0 } else { 2.0 })
            .collect();
        let a = Strategy::new(&p.controls, p.grid(), vals).unwrap();
        let d = compute_density(&p, &a).unwrap();
        assert!(matches!(
            adjoint_residual(&p, &a, &d).unwrap(),
            AdjointCheck::Skipped { .. }
        ));
    }

    #[test]
    fn strategy_validation() {
        let p = problem("-u*x", "sqrt(2)", "x*x", (1.0, 2.0, 2), 11);
        assert!(Strategy::new(&p.controls, p.grid(), vec![1.5; 11]).is_ok());
        assert!(Strategy::new(&p.controls, p.grid(), vec![2.5; 11]).is_err());
        assert!(Strategy::new(&p.controls, p.grid(), vec![1.5; 10]).is_err());
        let c = Strategy::clamped(&p.controls, p.grid(), vec![9.0; 11]);
        assert!(c.values().iter().all(|&u| u == 2.0));
        let a = Strategy::constant(p.grid(), 1.0);
        let mut v = vec![1.0; 11];
        v[3] = 2.0;
        let b = Strategy::new(&p.controls, p.grid(), v).unwrap();
        assert!((a.changed_fraction(&b) - 1.0 / 11.0).abs() < 1e-15);
        assert_eq!(b.max_jump(), 1.0);
        assert_eq!(b.at(p.grid().x(3) + 0.1 * p.grid().step()), 2.0);
    }
}
