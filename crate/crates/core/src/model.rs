//! The controlled diffusion `dX = b(α(X), X) dt + σ(α(X), X) dW` with running
//! cost `f`, its discretization parameters, and runtime checks of the
//! standing assumptions.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{CoefficientExpr, DomainError};
use crate::numerics::{fitted_coefficients, polynomial_envelope, Grid};

/// `|σ|` at or below this is treated as degenerate.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Highest polynomial degree accepted by the growth checks.
pub const MAX_GROWTH_EXPONENT: u32 = 8;

/// Compact control interval, discretized uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    pub u_min: f64,
    pub u_max: f64,
    pub n_controls: usize,
}

impl ControlSet {
    pub fn new(u_min: f64, u_max: f64, n_controls: usize) -> Result<Self> {
        if !(u_min.is_finite() && u_max.is_finite()) || u_min > u_max {
            return Err(Error::Config(format!(
                "control range [{u_min}, {u_max}] is not a compact interval"
            )));
        }
        if n_controls == 0 {
            return Err(Error::Config("n_controls must be at least 1".into()));
        }
        Ok(Self {
            u_min,
            u_max,
            n_controls,
        })
    }

    pub fn len(&self) -> usize {
        if self.u_min == self.u_max {
            1
        } else {
            self.n_controls
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, k: usize) -> f64 {
        let n = self.len();
        if n == 1 {
            self.u_min
        } else if k + 1 == n {
            self.u_max
        } else {
            self.u_min + (self.u_max - self.u_min) * k as f64 / (n - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.value(k)).collect()
    }

    pub fn contains(&self, u: f64) -> bool {
        let slack = 1e-12 * (1.0 + self.u_min.abs().max(self.u_max.abs()));
        u >= self.u_min - slack && u <= self.u_max + slack
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.u_min, self.u_max)
    }
}

/// Truncated spatial domain with a centered core region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub n_nodes: usize,
    pub core_fraction: f64,
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64, n_nodes: usize, core_fraction: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(Error::Config(format!(
                "domain [{x_min}, {x_max}] must satisfy x_min < x_max"
            )));
        }
        if n_nodes < 3 {
            return Err(Error::Config("n_nodes must be at least 3".into()));
        }
        if !(core_fraction > 0.0 && core_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "core_fraction {core_fraction} must lie in (0, 1]"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_nodes,
            core_fraction,
        })
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.x_min, self.x_max, self.n_nodes)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.x_min + self.x_max)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.x_max - self.x_min)
    }

    pub fn core_interval(&self) -> (f64, f64) {
        let half = self.core_fraction * self.half_width();
        (self.center() - half, self.center() + half)
    }

    /// Node indices inside the core interval; never empty.
    pub fn core_nodes(&self) -> Range<usize> {
        let grid = self.grid();
        let (lo, hi) = self.core_interval();
        let eps = 1e-9 * grid.step();
        let first = (0..grid.len()).find(|&i| grid.x(i) >= lo - eps);
        let last = (0..grid.len()).rev().find(|&i| grid.x(i) <= hi + eps);
        match (first, last) {
            (Some(a), Some(b)) if a <= b => a..b + 1,
            _ => {
                let c = grid.nearest(self.center());
                c..c + 1
            }
        }
    }

    pub fn in_core(&self, x: f64) -> bool {
        let (lo, hi) = self.core_interval();
        x >= lo && x <= hi
    }

    /// Same interval with every spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            n_nodes: 2 * self.n_nodes - 1,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSet {
    pub rho_tol: f64,
    pub residual_tol: f64,
    pub tail_mass_tol: f64,
    pub max_iterations: usize,
    /// Densities below this are too small to divide by in the Poisson solve.
    pub p_floor: f64,
    /// Largest control jump between neighbouring nodes for which a strategy
    /// still counts as smooth.
    pub strategy_jump_tol: f64,
}

/// On-disk problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub drift: String,
    pub diffusion: String,
    pub cost: String,
    pub u_min: f64,
    pub u_max: f64,
    pub n_controls: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub n_nodes: usize,
    #[serde(default = "defaults::core_fraction")]
    pub core_fraction: f64,
    #[serde(default = "defaults::rho_tol")]
    pub rho_tol: f64,
    #[serde(default = "defaults::residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "defaults::tail_mass_tol")]
    pub tail_mass_tol: f64,
    #[serde(default = "defaults::max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "defaults::p_floor")]
    pub p_floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy_jump_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_strategy: Option<String>,
}

mod defaults {
    pub fn core_fraction() -> f64 {
        0.5
    }
    pub fn rho_tol() -> f64 {
        1e-9
    }
    pub fn residual_tol() -> f64 {
        1e-6
    }
    pub fn tail_mass_tol() -> f64 {
        1e-3
    }
    pub fn max_iterations() -> usize {
        50
    }
    pub fn p_floor() -> f64 {
        1e-14
    }
}

impl ProblemConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// A validated control problem. Immutable once built.
#[derive(Debug, Clone)]
pub struct Problem {
    pub drift: CoefficientExpr,
    pub diffusion: CoefficientExpr,
    pub cost: CoefficientExpr,
    pub controls: ControlSet,
    pub domain: Domain,
    pub tolerances: ToleranceSet,
    pub initial_strategy: Option<CoefficientExpr>,
    config: ProblemConfig,
}

/// Coefficients at one `(u, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub drift: f64,
    pub sigma: f64,
    pub cost: f64,
}

impl Coefficients {
    pub fn a(&self) -> f64 {
        0.5 * self.sigma * self.sigma
    }
}

fn parse_field(field: &str, src: &str) -> Result<CoefficientExpr> {
    CoefficientExpr::parse(src).map_err(|source| Error::Parse {
        field: field.to_string(),
        source,
    })
}

impl Problem {
    pub fn from_config(config: ProblemConfig) -> Result<Self> {
        let drift = parse_field("drift", &config.drift)?;
        let diffusion = parse_field("diffusion", &config.diffusion)?;
        let cost = parse_field("cost", &config.cost)?;
        let initial_strategy = match &config.initial_strategy {
            Some(src) => {
                let e = parse_field("initial_strategy", src)?;
                if e.uses(crate::expr::Var::U) {
                    return Err(Error::Config(
                        "initial_strategy may only depend on x".into(),
                    ));
                }
                Some(e)
            }
            None => None,
        };
        let controls = ControlSet::new(config.u_min, config.u_max, config.n_controls)?;
        let domain = Domain::new(
            config.x_min,
            config.x_max,
            config.n_nodes,
            config.core_fraction,
        )?;
        for (name, v) in [
            ("rho_tol", config.rho_tol),
            ("residual_tol", config.residual_tol),
            ("tail_mass_tol", config.tail_mass_tol),
            ("p_floor", config.p_floor),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        if config.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        let strategy_jump_tol = config
            .strategy_jump_tol
            .unwrap_or(0.01 * (controls.u_max - controls.u_min));
        let tolerances = ToleranceSet {
            rho_tol: config.rho_tol,
            residual_tol: config.residual_tol,
            tail_mass_tol: config.tail_mass_tol,
            max_iterations: config.max_iterations,
            p_floor: config.p_floor,
            strategy_jump_tol,
        };
        Ok(Self {
            drift,
            diffusion,
            cost,
            controls,
            domain,
            tolerances,
            initial_strategy,
            config,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_config(ProblemConfig::from_toml(text)?)
    }

    /// The configuration this problem was built from.
    pub fn config(&self) -> &ProblemConfig {
        &self.config
    }

    /// Copy with a different spatial resolution.
    pub fn with_nodes(&self, n_nodes: usize) -> Result<Self> {
        let mut config = self.config.clone();
        config.n_nodes = n_nodes;
        Self::from_config(config)
    }

    /// Copy with the configuration edited in place.
    pub fn with_config(&self, edit: impl FnOnce(&mut ProblemConfig)) -> Result<Self> {
        let mut config = self.config.clone();
        edit(&mut config);
        Self::from_config(config)
    }

    pub fn grid(&self) -> Grid {
        self.domain.grid()
    }

    pub fn coefficients(&self, u: f64, x: f64) -> Result<Coefficients, DomainError> {
        Ok(Coefficients {
            drift: self.drift.eval(u, x)?,
            sigma: self.diffusion.eval(u, x)?,
            cost: self.cost.eval(u, x)?,
        })
    }
}

/// Coefficients tabulated on (control grid × spatial grid), plus the fitted
/// generator coefficients used by the improvement scan.
#[derive(Debug, Clone)]
pub struct ControlTable {
    controls: Vec<f64>,
    n_nodes: usize,
    drift: Vec<f64>,
    sigma: Vec<f64>,
    cost: Vec<f64>,
    fitted_a: Vec<f64>,
    fitted_b: Vec<f64>,
}

impl ControlTable {
    pub fn build(p: &Problem) -> Result<Self> {
        let grid = p.grid();
        let h = grid.step();
        let controls = p.controls.values();
        let n = grid.len();
        let size = controls.len() * n;
        let mut t = Self {
            controls,
            n_nodes: n,
            drift: Vec::with_capacity(size),
            sigma: Vec::with_capacity(size),
            cost: Vec::with_capacity(size),
            fitted_a: Vec::with_capacity(size),
            fitted_b: Vec::with_capacity(size),
        };
        for &u in &t.controls {
            for i in 0..n {
                let c = p.coefficients(u, grid.x(i))?;
                let (fa, fb) = fitted_coefficients(c.a(), c.drift, h);
                t.drift.push(c.drift);
                t.sigma.push(c.sigma);
                t.cost.push(c.cost);
                t.fitted_a.push(fa);
                t.fitted_b.push(fb);
            }
        }
        Ok(t)
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn control(&self, k: usize) -> f64 {
        self.controls[k]
    }

    pub fn drift(&self, k: usize, i: usize) -> f64 {
        self.drift[k * self.n_nodes + i]
    }

    pub fn sigma(&self, k: usize, i: usize) -> f64 {
        self.sigma[k * self.n_nodes + i]
    }

    pub fn cost(&self, k: usize, i: usize) -> f64 {
        self.cost[k * self.n_nodes + i]
    }

    /// Fitted `(ã, b̃)` at control `k`, node `i`.
    pub fn fitted(&self, k: usize, i: usize) -> (f64, f64) {
        let j = k * self.n_nodes + i;
        (self.fitted_a[j], self.fitted_b[j])
    }

    /// `ã·d2v + b̃·dv + f`: the discrete generator applied to `v`, plus cost.
    pub fn hamiltonian(&self, k: usize, i: usize, dv: f64, d2v: f64) -> f64 {
        let j = k * self.n_nodes + i;
        self.fitted_a[j] * d2v + self.fitted_b[j] * dv + self.cost[j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Warning,
    Fatal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub assumption: String,
    pub status: CheckStatus,
    /// `(u, x)` at which a failure was observed.
    pub witness: Option<(f64, f64)>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fatal)
    }

    pub fn fatal(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fatal)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// `Err` naming every fatal check, if any.
    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            let msg = self
                .fatal()
                .map(|c| format!("{} ({}): {}", c.name, c.assumption, c.detail))
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::Validation(msg))
        }
    }
}

fn check(
    name: &str,
    assumption: &str,
    status: CheckStatus,
    witness: Option<(f64, f64)>,
    detail: String,
) -> AssumptionCheck {
    AssumptionCheck {
        name: name.into(),
        assumption: assumption.into(),
        status,
        witness,
        detail,
    }
}

/// Samples the coefficients on the full (control × space) grid and checks
/// the standing assumptions there.
pub fn validate_problem(p: &Problem) -> ValidationReport {
    let grid = p.grid();
    let controls = p.controls.values();
    let mut checks = Vec::new();

    checks.push(check(
        "compact_controls",
        "A4",
        CheckStatus::Pass,
        None,
        format!(
            "U = [{}, {}] with {} grid points",
            p.controls.u_min,
            p.controls.u_max,
            controls.len()
        ),
    ));

    let table = match ControlTable::build(p) {
        Ok(t) => t,
        Err(Error::Domain(e)) => {
            checks.push(check(
                "finite_coefficients",
                "A1",
                CheckStatus::Fatal,
                Some((e.u, e.x)),
                e.to_string(),
            ));
            return ValidationReport { checks };
        }
        Err(e) => {
            checks.push(check(
                "finite_coefficients",
                "A1",
                CheckStatus::Fatal,
                None,
                e.to_string(),
            ));
            return ValidationReport { checks };
        }
    };
    checks.push(check(
        "finite_coefficients",
        "A1",
        CheckStatus::Pass,
        None,
        "b, σ, f finite on the whole grid".into(),
    ));

    // non-degeneracy: |σ| ∈ [1/C, C]
    let mut lo = (f64::INFINITY, 0.0, 0.0);
    let mut hi = 0.0f64;
    for k in 0..table.n_controls() {
        for i in 0..grid.len() {
            let s = table.sigma(k, i).abs();
            hi = hi.max(s);
            if s < lo.0 {
                lo = (s, table.control(k), grid.x(i));
            }
        }
    }
    let c_sigma = hi.max(1.0 / lo.0);
    checks.push(if lo.0 <= SIGMA_FLOOR {
        check(
            "non_degeneracy",
            "A1",
            CheckStatus::Fatal,
            Some((lo.1, lo.2)),
            format!("σ vanishes: |σ(u={}, x={})| = {:.3e}", lo.1, lo.2, lo.0),
        )
    } else {
        check(
            "non_degeneracy",
            "A1",
            CheckStatus::Pass,
            None,
            format!("|σ| within [1/C, C] for C = {c_sigma:.6}"),
        )
    });

    // recurrence proxy: sup_u x·b(u, x) < 0 at both ends
    let ends = [0, grid.len() - 1];
    let mut worst = (f64::NEG_INFINITY, 0.0, 0.0);
    for &i in &ends {
        let x = grid.x(i);
        for k in 0..table.n_controls() {
            let v = x * table.drift(k, i);
            if v > worst.0 {
                worst = (v, table.control(k), x);
            }
        }
    }
    checks.push(if worst.0 >= 0.0 {
        check(
            "recurrence",
            "A2",
            CheckStatus::Fatal,
            Some((worst.1, worst.2)),
            format!(
                "x·b(u, x) = {:.3e} ≥ 0 at u = {}, x = {}",
                worst.0, worst.1, worst.2
            ),
        )
    } else {
        check(
            "recurrence",
            "A2",
            CheckStatus::Pass,
            None,
            format!("sup_u x·b(u, x) = {:.3e} < 0 at the domain ends", worst.0),
        )
    });

    // polynomial growth of sup_u |f|
    let xs = grid.points();
    let sup_cost: Vec<f64> = (0..grid.len())
        .map(|i| {
            (0..table.n_controls())
                .map(|k| table.cost(k, i).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    checks.push(
        match polynomial_envelope(&xs, &sup_cost, MAX_GROWTH_EXPONENT) {
            Some(env) => check(
                "cost_growth",
                "A3",
                CheckStatus::Pass,
                None,
                format!(
                    "sup_u |f(u, x)| ≤ {:.4e}·(1 + |x|^{})",
                    env.constant, env.exponent
                ),
            ),
            None => {
                let i = (0..grid.len())
                    .max_by(|&a, &b| sup_cost[a].total_cmp(&sup_cost[b]))
                    .unwrap_or(0);
                check(
                    "cost_growth",
                    "A3",
                    CheckStatus::Warning,
                    Some((f64::NAN, xs[i])),
                    format!("sup_u |f| grows faster than |x|^{MAX_GROWTH_EXPONENT} on the grid"),
                )
            }
        },
    );

    ValidationReport { checks }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn config(
        drift: &str,
        diffusion: &str,
        cost: &str,
        u: (f64, f64, usize),
    ) -> ProblemConfig {
        ProblemConfig {
            drift: drift.into(),
            diffusion: diffusion.into(),
            cost: cost.into(),
            u_min: u.0,
            u_max: u.1,
            n_controls: u.2,
            x_min: -8.0,
            x_max: 8.0,
            n_nodes: 401,
            core_fraction: 0.5,
            rho_tol: 1e-9,
            residual_tol: 1e-6,
            tail_mass_tol: 1e-3,
            max_iterations: 50,
            p_floor: 1e-14,
            strategy_jump_tol: None,
            initial_strategy: None,
        }
    }

    #[test]
    fn ornstein_uhlenbeck_passes_everything() {
        let p = Problem::from_config(config("-x", "sqrt(2)", "x*x", (0.0, 0.0, 1))).unwrap();
        let r = validate_problem(&p);
        assert!(
            r.checks.iter().all(|c| c.status == CheckStatus::Pass),
            "{r:?}"
        );
    }

    #[test]
    fn vanishing_diffusion_is_fatal_at_zero_control() {
        let p = Problem::from_config(config("-x", "u", "x*x", (0.0, 2.0, 21))).unwrap();
        let r = validate_problem(&p);
        let c = r.check("non_degeneracy").unwrap();
        assert_eq!(c.status, CheckStatus::Fatal);
        assert_eq!(c.witness.unwrap().0, 0.0);
        assert!(!r.passed());
        assert!(r
            .into_result()
            .unwrap_err()
            .to_string()
            .contains("non_degeneracy"));
    }

    #[test]
    fn explosive_drift_fails_recurrence() {
        let p = Problem::from_config(config("x", "1", "x*x", (0.0, 0.0, 1))).unwrap();
        let r = validate_problem(&p);
        assert_eq!(r.check("recurrence").unwrap().status, CheckStatus::Fatal);
    }

    #[test]
    fn domain_errors_are_fatal_with_witness() {
        let p = Problem::from_config(config("-x", "sqrt(u - 1)", "1", (0.0, 2.0, 3))).unwrap();
        let r = validate_problem(&p);
        let c = r.check("finite_coefficients").unwrap();
        assert_eq!(c.status, CheckStatus::Fatal);
        assert_eq!(c.witness.unwrap().0, 0.0);
    }

    #[test]
    fn super_polynomial_cost_is_only_a_warning() {
        let p = Problem::from_config(config("-x", "1", "exp(x*x/2)", (0.0, 0.0, 1))).unwrap();
        let r = validate_problem(&p);
        assert_eq!(r.check("cost_growth").unwrap().status, CheckStatus::Warning);
        assert!(r.passed());
    }

    #[test]
    fn control_grid() {
        let u = ControlSet::new(1.0, 2.0, 101).unwrap();
        assert_eq!(u.len(), 101);
        assert_eq!(u.value(0), 1.0);
        assert_eq!(u.value(100), 2.0);
        assert!((u.value(50) - 1.5).abs() < 1e-15);
        assert_eq!(ControlSet::new(0.5, 0.5, 7).unwrap().values(), vec![0.5]);
        assert!(ControlSet::new(2.0, 1.0, 3).is_err());
        assert!(ControlSet::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn core_region() {
        let d = Domain::new(-8.0, 8.0, 4001, 0.5).unwrap();
        let core = d.core_nodes();
        let g = d.grid();
        assert_eq!(g.x(core.start), -4.0);
        assert_eq!(g.x(core.end - 1), 4.0);
        let tiny = Domain::new(0.0, 1.0, 4, 1e-6).unwrap();
        assert_eq!(tiny.core_nodes().len(), 1);
        assert!(Domain::new(1.0, 1.0, 5, 0.5).is_err());
        assert!(Domain::new(0.0, 1.0, 2, 0.5).is_err());
        assert!(Domain::new(0.0, 1.0, 5, 0.0).is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = config("-u*x", "sqrt(2)", "x*x + u", (1.0, 2.0, 101));
        c.initial_strategy = Some("1 + 0.5*tanh(x)".into());
        let back = ProblemConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert!(ProblemConfig::from_toml("drift = \"x\"\nbogus = 1").is_err());
    }

    #[test]
    fn bad_configs() {
        let mut c = config("-x +", "1", "x", (0.0, 0.0, 1));
        assert!(matches!(
            Problem::from_config(c.clone()),
            Err(Error::Parse { .. })
        ));
        c.drift = "-x".into();
        c.initial_strategy = Some("u".into());
        assert!(matches!(
            Problem::from_config(c.clone()),
            Err(Error::Config(_))
        ));
        c.initial_strategy = None;
        c.max_iterations = 0;
        assert!(Problem::from_config(c).is_err());
    }
}
