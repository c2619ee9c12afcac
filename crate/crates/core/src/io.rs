//! CSV tables and JSON reports. Floats are written with 17 significant
//! digits so every value round-trips exactly.

use std::io::{Read, Write};

use serde::Serialize;

use crate::density::{InvariantDensity, Strategy};
use crate::error::{Error, Result};
use crate::hjb::BellmanResidual;
use crate::howard::{IterationReport, SolveResult, StopReason};
use crate::mcsim::TracePoint;
use crate::model::Problem;
use crate::numerics::{Grid, GridFunction};
use crate::poisson::ValueFunction;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn write_table<W: Write>(
    out: W,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `x, v, dv, d2v[, residual]`.
pub fn write_value_csv<W: Write>(
    out: W,
    vf: &ValueFunction,
    residual: Option<&GridFunction>,
) -> Result<()> {
    let grid = vf.v.grid();
    let mut header = vec!["x", "v", "dv", "d2v"];
    if residual.is_some() {
        header.push("residual");
    }
    write_table(
        out,
        &header,
        (0..grid.len()).map(|i| {
            let mut row = vec![
                fmt_f64(grid.x(i)),
                fmt_f64(vf.v[i]),
                fmt_f64(vf.dv[i]),
                fmt_f64(vf.d2v[i]),
            ];
            if let Some(r) = residual {
                row.push(fmt_f64(r[i]));
            }
            row
        }),
    )
}

pub fn write_strategy_csv<W: Write>(out: W, alpha: &Strategy) -> Result<()> {
    let grid = alpha.grid();
    write_table(
        out,
        &["x", "u"],
        (0..grid.len()).map(|i| vec![fmt_f64(grid.x(i)), fmt_f64(alpha.value(i))]),
    )
}

pub fn write_density_csv<W: Write>(out: W, d: &InvariantDensity) -> Result<()> {
    let grid = d.density.grid();
    write_table(
        out,
        &["x", "p", "log_weight"],
        (0..grid.len()).map(|i| {
            vec![
                fmt_f64(grid.x(i)),
                fmt_f64(d.density[i]),
                fmt_f64(d.log_weight[i]),
            ]
        }),
    )
}

pub fn write_iterations_csv<W: Write>(out: W, its: &[IterationReport]) -> Result<()> {
    write_table(
        out,
        &[
            "n",
            "rho",
            "rho_decrease",
            "residual",
            "change_fraction",
            "beta",
        ],
        its.iter().map(|it| {
            vec![
                it.n.to_string(),
                fmt_f64(it.rho),
                fmt_opt(it.rho_decrease),
                fmt_f64(it.bellman_residual_sup),
                fmt_f64(it.strategy_change_fraction),
                fmt_opt(it.beta),
            ]
        }),
    )
}

pub fn write_bellman_csv<W: Write>(out: W, r: &BellmanResidual) -> Result<()> {
    let grid = r.full_form.grid();
    write_table(
        out,
        &["x", "full_form", "reduced_form", "argmin_u"],
        (0..grid.len()).map(|i| {
            vec![
                fmt_f64(grid.x(i)),
                fmt_f64(r.full_form[i]),
                fmt_f64(r.reduced_form[i]),
                fmt_f64(r.argmin_strategy.value(i)),
            ]
        }),
    )
}

pub fn write_trace_csv<W: Write>(out: W, trace: &[TracePoint]) -> Result<()> {
    write_table(
        out,
        &["t", "x", "u"],
        trace
            .iter()
            .map(|p| vec![fmt_f64(p.t), fmt_f64(p.x), fmt_f64(p.u)]),
    )
}

/// Columns of a numeric CSV table, by header name.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::Table(format!("missing column `{name}`")))
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// Reads a CSV with a header row and finite numeric cells only.
pub fn parse_table(text: &str) -> Result<Table> {
    read_table(text.as_bytes())
}

pub fn read_table<R: Read>(input: R) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if headers.is_empty() || headers.iter().any(String::is_empty) {
        return Err(Error::Table("empty column name".into()));
    }
    for (i, h) in headers.iter().enumerate() {
        if headers[..i].contains(h) {
            return Err(Error::Table(format!("duplicate column `{h}`")));
        }
    }
    let mut columns = vec![Vec::new(); headers.len()];
    for (line, record) in r.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Table(format!(
                "row {} has {} cells",
                line + 1,
                record.len()
            )));
        }
        for (col, cell) in columns.iter_mut().zip(record.iter()) {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Table(format!("row {}: `{cell}` is not a number", line + 1)))?;
            if !v.is_finite() {
                return Err(Error::Table(format!("row {}: non-finite value", line + 1)));
            }
            col.push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Table("no data rows".into()));
    }
    Ok(Table { headers, columns })
}

fn check_abscissae(grid: Grid, xs: &[f64]) -> Result<()> {
    if xs.len() != grid.len() {
        return Err(Error::Table(format!(
            "{} rows for a grid of {} nodes",
            xs.len(),
            grid.len()
        )));
    }
    let tol = 1e-9 * grid.x_min().abs().max(grid.x_max().abs()).max(1.0);
    for (i, &x) in xs.iter().enumerate() {
        if (x - grid.x(i)).abs() > tol {
            return Err(Error::Table(format!(
                "row {}: x = {x} does not match grid node {}",
                i + 1,
                grid.x(i)
            )));
        }
    }
    Ok(())
}

/// Value function from an `x, v, dv, d2v` table on the problem grid.
pub fn value_from_table(p: &Problem, t: &Table, rho: f64) -> Result<ValueFunction> {
    let grid = p.grid();
    check_abscissae(grid, t.column("x")?)?;
    let col = |name| Ok::<_, Error>(GridFunction::new(grid, t.column(name)?.to_vec()));
    Ok(ValueFunction {
        v: col("v")?,
        dv: col("dv")?,
        d2v: col("d2v")?,
        rho,
        strategy: None,
        guarded_nodes: 0,
    })
}

/// Strategy from an `x, u` table; values must lie in `U`.
pub fn strategy_from_table(p: &Problem, t: &Table) -> Result<Strategy> {
    let grid = p.grid();
    check_abscissae(grid, t.column("x")?)?;
    Strategy::new(&p.controls, grid, t.column("u")?.to_vec())
}

#[derive(Debug, Serialize)]
pub struct SolveSummary<'a> {
    pub rho_tilde: f64,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub n_iterations: usize,
    pub iterations: &'a [IterationReport],
    pub warnings: &'a [String],
    pub tail_mass: f64,
    pub x: Vec<f64>,
    pub strategy: &'a [f64],
    pub v: &'a [f64],
    pub dv: &'a [f64],
    pub d2v: &'a [f64],
    pub density: &'a [f64],
}

impl<'a> SolveSummary<'a> {
    pub fn new(r: &'a SolveResult) -> Self {
        Self {
            rho_tilde: r.rho_tilde,
            converged: r.converged(),
            stop_reason: r.stop_reason,
            n_iterations: r.iterations.len(),
            iterations: &r.iterations,
            warnings: &r.warnings,
            tail_mass: r.density.tail_mass,
            x: r.strategy.grid().points(),
            strategy: r.strategy.values(),
            v: r.value.v.values(),
            dv: r.value.dv.values(),
            d2v: r.value.d2v.values(),
            density: r.density.density.values(),
        }
    }
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}
