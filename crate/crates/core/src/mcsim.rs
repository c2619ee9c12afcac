//! Euler–Maruyama simulation of the controlled diffusion, as an independent
//! check on the quadrature pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{average_cost, compute_density, Strategy};
use crate::error::{Error, Result};
use crate::model::Problem;

pub const N_BATCHES: usize = 20;

/// Paths leaving `EXPLOSION_FACTOR` half-widths around the domain centre abort.
pub const EXPLOSION_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub time_step: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub reflect_at_boundary: bool,
    /// Starting point; the domain centre when absent.
    pub x0: Option<f64>,
    /// Each step sums this many Gaussian increments of length `Δ/k`, so runs
    /// with `(Δ, k)` and `(Δ/2, k/2)` share one Brownian path.
    pub noise_substeps: usize,
    /// `bias_allowance = coefficient · Δ · max(1, |ρ|)`.
    pub bias_coefficient: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            time_step: 1e-3,
            horizon: 2000.0,
            burn_in: 100.0,
            n_paths: 4,
            seed: 0,
            reflect_at_boundary: true,
            x0: None,
            noise_substeps: 1,
            bias_coefficient: 1.0,
        }
    }
}

struct Schedule {
    burn_steps: usize,
    batch_steps: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return bad("time_step must be positive");
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.horizon && self.horizon.is_finite()) {
            return bad("need 0 <= burn_in < horizon");
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1");
        }
        if self.noise_substeps == 0 {
            return bad("noise_substeps must be at least 1");
        }
        if self.bias_coefficient.is_nan() || self.bias_coefficient < 0.0 {
            return bad("bias_coefficient must be non-negative");
        }
        if let Some(x0) = self.x0 {
            if !x0.is_finite() {
                return bad("x0 must be finite");
            }
        }
        self.schedule().map(|_| ())
    }

    fn schedule(&self) -> Result<Schedule> {
        let total = (self.horizon / self.time_step).round() as usize;
        let burn = (self.burn_in / self.time_step).round() as usize;
        let batch_steps = total.saturating_sub(burn) / N_BATCHES;
        if batch_steps == 0 {
            return Err(Error::Config(format!(
                "horizon too short for {N_BATCHES} batches at this time step"
            )));
        }
        Ok(Schedule {
            burn_steps: total - N_BATCHES * batch_steps,
            batch_steps,
        })
    }

    pub fn bias_allowance(&self, rho: f64) -> f64 {
        self.bias_coefficient * self.time_step * rho.abs().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_batches: usize,
    pub fraction_time_outside_core: f64,
}

struct PathStats {
    batch_means: Vec<f64>,
    outside: usize,
}

/// One Euler–Maruyama step driver with boundary handling.
struct Stepper<'a> {
    p: &'a Problem,
    alpha: &'a Strategy,
    cfg: &'a SimConfig,
    sub_scale: f64,
}

impl Stepper<'_> {
    fn noise(&self, rng: &mut ChaCha8Rng) -> f64 {
        let k = self.cfg.noise_substeps;
        if k == 1 {
            return rng.sample(StandardNormal);
        }
        let mut sum = 0.0;
        for _ in 0..k {
            let z: f64 = rng.sample(StandardNormal);
            sum += z;
        }
        sum * self.sub_scale
    }

    fn step(&self, x: f64, rng: &mut ChaCha8Rng, path: usize, t: f64) -> Result<f64> {
        let dt = self.cfg.time_step;
        let u = self.alpha.at(x);
        let drift = self.p.drift.eval(u, x)?;
        let sigma = self.p.diffusion.eval(u, x)?;
        let mut next = x + drift * dt + sigma * dt.sqrt() * self.noise(rng);
        let domain = &self.p.domain;
        if !next.is_finite()
            || (next - domain.center()).abs() > EXPLOSION_FACTOR * domain.half_width()
        {
            return Err(Error::PathExplosion {
                path,
                time: t + dt,
                x: next,
            });
        }
        if self.cfg.reflect_at_boundary {
            let (lo, hi) = (domain.x_min, domain.x_max);
            while next < lo || next > hi {
                next = if next < lo {
                    2.0 * lo - next
                } else {
                    2.0 * hi - next
                };
            }
        }
        Ok(next)
    }
}

fn run_path(
    stepper: &Stepper,
    path: usize,
    schedule: &Schedule,
    observable: &(dyn Fn(f64, f64) -> Result<f64> + Sync),
) -> Result<PathStats> {
    let cfg = stepper.cfg;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path as u64);
    let dt = cfg.time_step;
    let mut x = cfg.x0.unwrap_or(stepper.p.domain.center());
    let mut step = 0usize;
    for _ in 0..schedule.burn_steps {
        x = stepper.step(x, &mut rng, path, step as f64 * dt)?;
        step += 1;
    }
    let mut batch_means = Vec::with_capacity(N_BATCHES);
    let mut outside = 0;
    for _ in 0..N_BATCHES {
        let mut mean = 0.0;
        for k in 0..schedule.batch_steps {
            let u = stepper.alpha.at(x);
            mean += (observable(u, x)? - mean) / (k + 1) as f64;
            if !stepper.p.domain.in_core(x) {
                outside += 1;
            }
            x = stepper.step(x, &mut rng, path, step as f64 * dt)?;
            step += 1;
        }
        batch_means.push(mean);
    }
    Ok(PathStats {
        batch_means,
        outside,
    })
}

fn simulate(
    p: &Problem,
    alpha: &Strategy,
    cfg: &SimConfig,
    observable: &(dyn Fn(f64, f64) -> Result<f64> + Sync),
) -> Result<MCEstimate> {
    cfg.validate()?;
    if alpha.grid() != p.grid() {
        return Err(Error::Strategy(
            "strategy grid differs from the problem grid".into(),
        ));
    }
    let schedule = cfg.schedule()?;
    let stepper = Stepper {
        p,
        alpha,
        cfg,
        sub_scale: 1.0 / (cfg.noise_substeps as f64).sqrt(),
    };
    let paths: Vec<PathStats> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| run_path(&stepper, path, &schedule, observable))
        .collect::<Result<_>>()?;

    let mut batches = [0.0; N_BATCHES];
    for (j, b) in batches.iter_mut().enumerate() {
        for (k, path) in paths.iter().enumerate() {
            *b += (path.batch_means[j] - *b) / (k + 1) as f64;
        }
    }
    let mut mean = 0.0;
    for (j, b) in batches.iter().enumerate() {
        mean += (b - mean) / (j + 1) as f64;
    }
    let variance = batches.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (N_BATCHES - 1) as f64;
    let outside: usize = paths.iter().map(|s| s.outside).sum();
    let samples = cfg.n_paths * N_BATCHES * schedule.batch_steps;
    Ok(MCEstimate {
        mean,
        std_error: (variance / N_BATCHES as f64).sqrt(),
        n_batches: N_BATCHES,
        fraction_time_outside_core: outside as f64 / samples as f64,
    })
}

/// Long-run average of `f(α(X_t), X_t)` by batch means over all paths.
pub fn simulate_average_cost(p: &Problem, alpha: &Strategy, cfg: &SimConfig) -> Result<MCEstimate> {
    simulate(p, alpha, cfg, &|u, x| Ok(p.cost.eval(u, x)?))
}

/// Long-run average of `X_t^k`.
pub fn simulate_moment(
    p: &Problem,
    alpha: &Strategy,
    cfg: &SimConfig,
    k: i32,
) -> Result<MCEstimate> {
    simulate(p, alpha, cfg, &|_, x| Ok(x.powi(k)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub x: f64,
    pub u: f64,
}

/// Path 0, sampled every `every` steps from `t = 0`.
pub fn simulate_trace(
    p: &Problem,
    alpha: &Strategy,
    cfg: &SimConfig,
    every: usize,
) -> Result<Vec<TracePoint>> {
    cfg.validate()?;
    let every = every.max(1);
    let stepper = Stepper {
        p,
        alpha,
        cfg,
        sub_scale: 1.0 / (cfg.noise_substeps as f64).sqrt(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let total = (cfg.horizon / cfg.time_step).round() as usize;
    let mut x = cfg.x0.unwrap_or(p.domain.center());
    let mut out = Vec::with_capacity(total / every + 1);
    for step in 0..=total {
        let t = step as f64 * cfg.time_step;
        if step % every == 0 {
            out.push(TracePoint {
                t,
                x,
                u: alpha.at(x),
            });
        }
        if step < total {
            x = stepper.step(x, &mut rng, 0, t)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheckReport {
    pub rho_quadrature: f64,
    pub estimate: MCEstimate,
    pub deviation: f64,
    pub bias_allowance: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Compares the quadrature average cost of `alpha` with its simulated value.
pub fn cross_validate(p: &Problem, alpha: &Strategy, cfg: &SimConfig) -> Result<CrossCheckReport> {
    let d = compute_density(p, alpha)?;
    let rho = average_cost(p, alpha, &d)?;
    cross_validate_against(p, alpha, cfg, rho)
}

/// As [`cross_validate`] with the reference value supplied by the caller.
pub fn cross_validate_against(
    p: &Problem,
    alpha: &Strategy,
    cfg: &SimConfig,
    rho_reference: f64,
) -> Result<CrossCheckReport> {
    let estimate = simulate_average_cost(p, alpha, cfg)?;
    let bias_allowance = cfg.bias_allowance(rho_reference);
    let threshold = 3.0 * estimate.std_error + bias_allowance;
    let deviation = (rho_reference - estimate.mean).abs();
    Ok(CrossCheckReport {
        rho_quadrature: rho_reference,
        passed: deviation <= threshold,
        estimate,
        deviation,
        bias_allowance,
        threshold,
    })
}
