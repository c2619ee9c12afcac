//! Reward improvement (Howard policy iteration) for the ergodic problem.
//!
//! Each round evaluates the current strategy exactly (density, average cost,
//! centered bias) and then picks, node by node, the control minimizing the
//! discrete Hamiltonian. Because the density and the scan share one fitted
//! generator, the average costs decrease monotonically up to round-off.

use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::Serialize;

use crate::density::{
    average_cost_from, density_from_coefficients, InvariantDensity, NodeCoefficients, Strategy,
};
use crate::error::Result;
use crate::hjb::{bellman_with, BellmanResidual};
use crate::model::{ControlTable, Problem};
use crate::poisson::{solve_with, ValueFunction};

/// Decreases below `-MONOTONICITY_SLACK` are reported as warnings.
pub const MONOTONICITY_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    pub n: usize,
    pub rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_decrease: Option<f64>,
    pub bellman_residual_sup: f64,
    pub strategy_change_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    RhoTol,
    ResidualTol,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub strategy: Strategy,
    pub value: ValueFunction,
    pub density: InvariantDensity,
    pub rho_tilde: f64,
    pub iterations: Vec<IterationReport>,
    pub stop_reason: StopReason,
    pub warnings: Vec<String>,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.stop_reason != StopReason::MaxIterations
    }

    pub fn last(&self) -> &IterationReport {
        self.iterations.last().expect("at least one iteration")
    }
}

/// Node-wise argmin of the Hamiltonian over the control grid.
pub fn improve(p: &Problem, vf: &ValueFunction) -> Result<Strategy> {
    let table = ControlTable::build(p)?;
    Ok(bellman_with(p, &table, vf, vf.rho).argmin_strategy)
}

pub fn evaluate(p: &Problem, alpha: &Strategy) -> Result<(InvariantDensity, f64, ValueFunction)> {
    let coeffs = NodeCoefficients::sample(p, alpha)?;
    evaluate_with(p, alpha, &coeffs)
}

fn evaluate_with(
    p: &Problem,
    alpha: &Strategy,
    coeffs: &NodeCoefficients,
) -> Result<(InvariantDensity, f64, ValueFunction)> {
    let d = density_from_coefficients(p, coeffs)?;
    let rho = average_cost_from(coeffs, &d);
    let vf = solve_with(p, alpha, coeffs, &d, rho, p.grid().zero_node())?;
    Ok((d, rho, vf))
}

pub fn solve(p: &Problem, alpha0: &Strategy) -> Result<SolveResult> {
    let table = ControlTable::build(p)?;
    let tol = &p.tolerances;
    let mut alpha = Strategy::new(&p.controls, p.grid(), alpha0.values().to_vec())?;
    let mut iterations: Vec<IterationReport> = Vec::new();
    let mut warnings = Vec::new();
    let mut previous: Option<(f64, ValueFunction)> = None;

    for n in 0..tol.max_iterations {
        let start = Instant::now();
        let coeffs = NodeCoefficients::sample(p, &alpha)?;
        let (d, rho, vf) = evaluate_with(p, &alpha, &coeffs)?;
        let residual: BellmanResidual = bellman_with(p, &table, &vf, rho);

        let mut rho_decrease = None;
        if let Some((prev_rho, prev_v)) = &previous {
            let masses = d.masses();
            let beta = prev_v
                .v
                .values()
                .iter()
                .zip(&masses)
                .map(|(v, m)| v * m)
                .sum::<f64>()
                - vf.v
                    .values()
                    .iter()
                    .zip(&masses)
                    .map(|(v, m)| v * m)
                    .sum::<f64>();
            if let Some(last) = iterations.last_mut() {
                last.beta = Some(beta);
            }
            let decrease = prev_rho - rho;
            if decrease < -MONOTONICITY_SLACK {
                let msg = format!(
                    "average cost increased by {:.3e} at iteration {n}",
                    -decrease
                );
                warn!("{msg}");
                warnings.push(msg);
            }
            rho_decrease = Some(decrease);
        }

        let next = residual.argmin_strategy;
        let report = IterationReport {
            n,
            rho,
            rho_decrease,
            bellman_residual_sup: residual.sup_core,
            strategy_change_fraction: alpha.changed_fraction(&next),
            beta: None,
            wall_time: start.elapsed(),
        };
        debug!(
            "iteration {n}: rho = {rho:.12e}, residual = {:.3e}, changed = {:.4}",
            report.bellman_residual_sup, report.strategy_change_fraction
        );
        let residual_ok = report.bellman_residual_sup <= tol.residual_tol;
        let stop = match rho_decrease {
            None if residual_ok => Some(StopReason::ResidualTol),
            Some(dec) if residual_ok && dec < tol.rho_tol => Some(StopReason::RhoTol),
            _ if n + 1 == tol.max_iterations => Some(StopReason::MaxIterations),
            _ => None,
        };
        iterations.push(report);
        if let Some(stop_reason) = stop {
            return Ok(SolveResult {
                strategy: alpha,
                value: vf,
                density: d,
                rho_tilde: rho,
                iterations,
                stop_reason,
                warnings,
            });
        }
        previous = Some((rho, vf));
        alpha = next;
    }
    unreachable!("max_iterations is at least one")
}
