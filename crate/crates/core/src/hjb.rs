//! The ergodic Bellman operator `F[v, ρ] = min_u [L^u v + f^u] - ρ`, its
//! reduced form `v'' + min_u [(b v' + f - ρ)/a]`, and a verification report
//! for candidate solutions.
//!
//! `L^u` is the exponentially fitted generator `ã ∂² + b̃ ∂` used throughout the
//! crate; it agrees with `σ²/2 ∂² + b ∂` up to `O(h²)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::density::Strategy;
use crate::error::Result;
use crate::model::{ControlTable, Problem, MAX_GROWTH_EXPONENT};
use crate::numerics::{polynomial_envelope, Envelope, GridFunction};
use crate::poisson::ValueFunction;

#[derive(Debug, Clone, PartialEq)]
pub struct BellmanResidual {
    pub full_form: GridFunction,
    pub reduced_form: GridFunction,
    pub argmin_strategy: Strategy,
    pub sup_core: f64,
    pub sup_full: f64,
    /// `(min_u ã, max_u ã)` per node.
    pub(crate) a_range: Vec<(f64, f64)>,
}

struct NodeScan {
    full: f64,
    reduced: f64,
    argmin: f64,
    a_min: f64,
    a_max: f64,
}

fn scan_node(table: &ControlTable, i: usize, dv: f64, d2v: f64, rho: f64) -> NodeScan {
    let mut best = f64::INFINITY;
    let mut best_k = 0;
    let mut best_reduced = f64::INFINITY;
    let (mut a_min, mut a_max) = (f64::INFINITY, 0.0f64);
    for k in 0..table.n_controls() {
        let q = table.hamiltonian(k, i, dv, d2v);
        if q < best {
            best = q;
            best_k = k;
        }
        let (fa, fb) = table.fitted(k, i);
        let r = (fb * dv + table.cost(k, i) - rho) / fa;
        best_reduced = best_reduced.min(r);
        a_min = a_min.min(fa);
        a_max = a_max.max(fa);
    }
    NodeScan {
        full: best - rho,
        reduced: d2v + best_reduced,
        argmin: table.control(best_k),
        a_min,
        a_max,
    }
}

pub fn bellman_residual(p: &Problem, vf: &ValueFunction, rho: f64) -> Result<BellmanResidual> {
    let table = ControlTable::build(p)?;
    Ok(bellman_with(p, &table, vf, rho))
}

pub(crate) fn bellman_with(
    p: &Problem,
    table: &ControlTable,
    vf: &ValueFunction,
    rho: f64,
) -> BellmanResidual {
    let grid = p.grid();
    let scans: Vec<NodeScan> = (0..grid.len())
        .into_par_iter()
        .map(|i| scan_node(table, i, vf.dv[i], vf.d2v[i], rho))
        .collect();
    let full_form = GridFunction::new(grid, scans.iter().map(|s| s.full).collect());
    let reduced_form = GridFunction::new(grid, scans.iter().map(|s| s.reduced).collect());
    let argmin = scans.iter().map(|s| s.argmin).collect();
    BellmanResidual {
        sup_core: full_form.sup_norm_over(p.domain.core_nodes()),
        sup_full: full_form.sup_norm_over(0..grid.len()),
        full_form,
        reduced_form,
        argmin_strategy: Strategy::clamped(&p.controls, grid, argmin),
        a_range: scans.iter().map(|s| (s.a_min, s.a_max)).collect(),
    }
}

impl BellmanResidual {
    pub fn reduced_sup_core(&self, p: &Problem) -> f64 {
        self.reduced_form.sup_norm_over(p.domain.core_nodes())
    }

    /// Core nodes where the two forms disagree: `full` and `ã·reduced` must
    /// share a sign and satisfy `min ã·|red| ≤ |full| ≤ max ã·|red|`.
    pub fn form_violations(&self, p: &Problem) -> usize {
        let tol = p.tolerances.residual_tol;
        p.domain
            .core_nodes()
            .filter(|&i| {
                let full = self.full_form[i];
                let red = self.reduced_form[i];
                let (lo, hi) = self.a_range[i];
                let slack = tol * hi;
                let opposite = full * red < 0.0 && full.abs() > slack && red.abs() * lo > slack;
                opposite
                    || full.abs() > hi * red.abs() + slack
                    || full.abs() < lo * red.abs() - slack
            })
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub rho: f64,
    pub residual_tol: f64,
    pub sup_core_full: f64,
    pub sup_core_reduced: f64,
    pub sup_full: f64,
    pub form_violations: usize,
    pub forms_consistent: bool,
    pub value_envelope: Option<Envelope>,
    pub derivative_envelope: Option<Envelope>,
    /// Local Lipschitz constant of `v''` weighted by `1 + |x|^m + |x'|^m`.
    pub d2v_lipschitz: f64,
    pub verified: bool,
}

pub fn verify_solution(p: &Problem, vf: &ValueFunction, rho: f64) -> Result<VerificationReport> {
    let table = ControlTable::build(p)?;
    Ok(verify_with(p, &table, vf, rho))
}

pub(crate) fn verify_with(
    p: &Problem,
    table: &ControlTable,
    vf: &ValueFunction,
    rho: f64,
) -> VerificationReport {
    let residual = bellman_with(p, table, vf, rho);
    let grid = p.grid();
    let core = p.domain.core_nodes();
    let xs: Vec<f64> = core.clone().map(|i| grid.x(i)).collect();
    let value_envelope =
        polynomial_envelope(&xs, &vf.v.values()[core.clone()], MAX_GROWTH_EXPONENT);
    let derivative_envelope =
        polynomial_envelope(&xs, &vf.dv.values()[core.clone()], MAX_GROWTH_EXPONENT);
    let m = value_envelope
        .iter()
        .chain(derivative_envelope.iter())
        .map(|e| e.exponent)
        .max()
        .unwrap_or(MAX_GROWTH_EXPONENT) as i32;
    let d2v_lipschitz = core
        .clone()
        .zip(core.clone().skip(1))
        .map(|(i, j)| {
            let (x, y) = (grid.x(i), grid.x(j));
            let weight = 1.0 + x.abs().powi(m) + y.abs().powi(m);
            (vf.d2v[j] - vf.d2v[i]).abs() / (weight * (y - x))
        })
        .fold(0.0, f64::max);
    let form_violations = residual.form_violations(p);
    let tol = p.tolerances.residual_tol;
    let verified = residual.sup_core <= tol
        && form_violations == 0
        && value_envelope.is_some()
        && derivative_envelope.is_some()
        && d2v_lipschitz.is_finite();
    VerificationReport {
        rho,
        residual_tol: tol,
        sup_core_full: residual.sup_core,
        sup_core_reduced: residual.reduced_sup_core(p),
        sup_full: residual.sup_full,
        form_violations,
        forms_consistent: form_violations == 0,
        value_envelope,
        derivative_envelope,
        d2v_lipschitz,
        verified,
    }
}
