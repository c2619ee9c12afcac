//! Ergodic (long-run average cost) control of one-dimensional diffusions
//! `dX = b(u, X) dt + σ(u, X) dW` with running cost `f(u, X)`.
//!
//! Strategies are evaluated exactly through the explicit invariant density
//! and a quadrature solution of the Poisson equation, improved by Howard
//! iteration, checked against the ergodic Bellman equation, and
//! cross-validated by Monte Carlo.
//!
//! ```
//! use ergodic_control::{catalog, howard, Strategy};
//!
//! let p = catalog::entry("ou").unwrap().problem().unwrap();
//! let r = howard::solve(&p, &Strategy::initial(&p).unwrap()).unwrap();
//! assert!((r.rho_tilde - 1.0).abs() < 1e-4);
//! ```

pub mod catalog;
pub mod density;
pub mod error;
pub mod expr;
pub mod hjb;
pub mod howard;
pub mod io;
pub mod mcsim;
pub mod model;
pub mod numerics;
pub mod poisson;

pub use density::{compute_density, InvariantDensity, Strategy};
pub use error::{Error, Result};
pub use expr::CoefficientExpr;
pub use hjb::{bellman_residual, verify_solution, BellmanResidual, VerificationReport};
pub use howard::{evaluate, improve, solve, SolveResult, StopReason};
pub use mcsim::{cross_validate, simulate_average_cost, MCEstimate, SimConfig};
pub use model::{validate_problem, Problem, ProblemConfig};
pub use numerics::{Grid, GridFunction};
pub use poisson::{solve_poisson, ValueFunction};
