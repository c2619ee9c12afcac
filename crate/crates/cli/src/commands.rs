use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use ergodic_control::density::adjoint_residual;
use ergodic_control::expr::Var;
use ergodic_control::hjb::{bellman_residual, verify_solution};
use ergodic_control::io::{self, SolveSummary};
use ergodic_control::mcsim::{cross_validate_against, simulate_trace, SimConfig};
use ergodic_control::model::CheckStatus;
use ergodic_control::poisson::ode_residual;
use ergodic_control::{
    evaluate, solve, validate_problem, CoefficientExpr, Error, Problem, ProblemConfig, Result,
    Strategy,
};
use log::warn;
use serde::Serialize;

use crate::manifest::Manifest;
use crate::{Command, SimArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_MAX_ITERATIONS: u8 = 2;
pub const EXIT_CHECK_FAILED: u8 = 3;

struct Output<'a> {
    dir: &'a Path,
    manifest: &'a mut Manifest,
}

impl Output<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.manifest.outputs.push(name.into());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }
}

fn load_problem(path: &Path, m: &mut Manifest) -> Result<Problem> {
    let text = fs::read_to_string(path)?;
    let config = ProblemConfig::from_toml(&text)?;
    m.problem = Some(config.clone());
    let p = Problem::from_config(config)?;
    let report = validate_problem(&p);
    for c in report
        .checks
        .iter()
        .filter(|c| c.status == CheckStatus::Warning)
    {
        warn!("{} ({}): {}", c.name, c.assumption, c.detail);
    }
    report.into_result()?;
    Ok(p)
}

fn load_strategy(p: &Problem, source: Option<&str>) -> Result<Strategy> {
    let Some(source) = source else {
        return Strategy::initial(p);
    };
    if Path::new(source).is_file() {
        let table = io::read_table(File::open(source)?)?;
        return io::strategy_from_table(p, &table);
    }
    let expr = CoefficientExpr::parse(source).map_err(|e| Error::Parse {
        field: "strategy".into(),
        source: e,
    })?;
    if expr.uses(Var::U) {
        return Err(Error::Strategy(
            "strategy expression may only depend on x".into(),
        ));
    }
    Strategy::from_expr(p, &expr)
}

pub fn run(command: &Command, m: &mut Manifest) -> Result<u8> {
    let common = command.common();
    let p = load_problem(&common.config, m)?;
    fs::create_dir_all(&common.out_dir)?;
    let dir = common.out_dir.clone();
    let mut out = Output {
        dir: &dir,
        manifest: m,
    };
    match command {
        Command::Solve { .. } => cmd_solve(&p, &mut out),
        Command::Evaluate { strategy, .. } => cmd_evaluate(&p, strategy.as_deref(), &mut out),
        Command::Simulate { strategy, sim, .. } => {
            cmd_simulate(&p, strategy.as_deref(), sim, &mut out)
        }
        Command::Verify { value, rho, .. } => cmd_verify(&p, value, *rho, &mut out),
    }
}

fn cmd_solve(p: &Problem, out: &mut Output) -> Result<u8> {
    let r = solve(p, &Strategy::initial(p)?)?;
    out.manifest.iteration_wall_times = r
        .iterations
        .iter()
        .map(|it| it.wall_time.as_secs_f64())
        .collect();
    io::write_json(out.create("solve_result.json")?, &SolveSummary::new(&r))?;
    io::write_iterations_csv(out.create("iterations.csv")?, &r.iterations)?;
    let residual = ode_residual(p, &r.strategy, &r.value)?;
    io::write_value_csv(out.create("value_function.csv")?, &r.value, Some(&residual))?;
    io::write_strategy_csv(out.create("strategy.csv")?, &r.strategy)?;
    io::write_density_csv(out.create("density.csv")?, &r.density)?;
    let bellman = bellman_residual(p, &r.value, r.rho_tilde)?;
    io::write_bellman_csv(out.create("bellman.csv")?, &bellman)?;
    println!(
        "rho = {} after {} iterations ({:?})",
        io::fmt_f64(r.rho_tilde),
        r.iterations.len(),
        r.stop_reason
    );
    Ok(if r.converged() {
        EXIT_OK
    } else {
        EXIT_MAX_ITERATIONS
    })
}

#[derive(Serialize)]
struct RhoReport {
    rho: f64,
    tail_mass: f64,
    normalization_constant: f64,
    guarded_nodes: usize,
    adjoint: ergodic_control::density::AdjointCheck,
    ode_residual_sup_core: f64,
}

fn cmd_evaluate(p: &Problem, source: Option<&str>, out: &mut Output) -> Result<u8> {
    let alpha = load_strategy(p, source)?;
    let (d, rho, vf) = evaluate(p, &alpha)?;
    let residual = ode_residual(p, &alpha, &vf)?;
    io::write_density_csv(out.create("density.csv")?, &d)?;
    io::write_value_csv(out.create("value_function.csv")?, &vf, Some(&residual))?;
    let report = RhoReport {
        rho,
        tail_mass: d.tail_mass,
        normalization_constant: d.normalization_constant,
        guarded_nodes: vf.guarded_nodes,
        adjoint: adjoint_residual(p, &alpha, &d)?,
        ode_residual_sup_core: residual.sup_norm_over(p.domain.core_nodes()),
    };
    io::write_json(out.create("rho.json")?, &report)?;
    println!("rho = {}", io::fmt_f64(rho));
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct McReport<'a> {
    simulation: &'a SimConfig,
    reference_overridden: bool,
    #[serde(flatten)]
    report: ergodic_control::mcsim::CrossCheckReport,
}

fn cmd_simulate(p: &Problem, source: Option<&str>, sim: &SimArgs, out: &mut Output) -> Result<u8> {
    let alpha = load_strategy(p, source)?;
    let cfg = SimConfig {
        time_step: sim.dt,
        horizon: sim.horizon,
        burn_in: sim.burn_in,
        n_paths: sim.paths,
        seed: sim.seed,
        x0: sim.x0,
        ..SimConfig::default()
    };
    cfg.validate()?;
    out.manifest.seed = Some(sim.seed);
    let reference = match sim.rho {
        Some(rho) => rho,
        None => evaluate(p, &alpha)?.1,
    };
    let report = cross_validate_against(p, &alpha, &cfg, reference)?;
    if let Some(every) = sim.trace_every {
        let trace = simulate_trace(p, &alpha, &cfg, every)?;
        io::write_trace_csv(out.create("trace.csv")?, &trace)?;
    }
    println!(
        "rho = {} vs Monte Carlo {} ± {} : {}",
        io::fmt_f64(report.rho_quadrature),
        io::fmt_f64(report.estimate.mean),
        io::fmt_f64(report.estimate.std_error),
        if report.passed { "pass" } else { "FAIL" }
    );
    let passed = report.passed;
    let mc = McReport {
        simulation: &cfg,
        reference_overridden: sim.rho.is_some(),
        report,
    };
    io::write_json(out.create("mc_report.json")?, &mc)?;
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_verify(p: &Problem, value: &Path, rho: f64, out: &mut Output) -> Result<u8> {
    let table = io::read_table(File::open(value)?)?;
    let vf = io::value_from_table(p, &table, rho)?;
    let report = verify_solution(p, &vf, rho)?;
    io::write_json(out.create("verification.json")?, &report)?;
    io::write_bellman_csv(out.create("bellman.csv")?, &bellman_residual(p, &vf, rho)?)?;
    println!(
        "sup core residual {} : {}",
        io::fmt_f64(report.sup_core_full),
        if report.verified {
            "verified"
        } else {
            "NOT verified"
        }
    );
    Ok(if report.verified {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}
