//! Unit commitment at desk scale: domain model, economic dispatch, exact
//! branch-and-bound solving, optimization-backed candidate actions, an MDP
//! environment, and an ensemble multi-step Q-learning agent.
//!
//! The crate is organized along the data flow of a daily commitment study:
//!
//! * [`model`] — generator/grid/load types, cost functions, PTDF
//!   construction, and schedule validation.
//! * [`dispatch`] — the single-period economic dispatch QP that prices a
//!   commitment status vector.
//! * [`exact`] — exhaustive and branch-and-bound commitment solvers used as
//!   the baseline and as subproblem engines.
//! * [`actiongen`] — down-selected candidate action sets built from
//!   lookahead and toggle subproblems.
//! * [`env`] — the sequential decision environment (state, step, reward,
//!   feature encoding).
//! * [`learner`] — the MLP Q-function, Adam updates, n-step returns, and
//!   the ensemble training loop.
//! * [`io`] — grid/load file formats and the synthetic load generator.

pub mod actiongen;
pub mod dispatch;
pub mod env;
pub mod error;
pub mod exact;
pub mod io;
pub mod learner;
pub mod model;

pub use error::UcError;
pub use model::{GridSpec, LineSpec, LoadScenario, Schedule, UnitSpec, ViolationReport};

/// Absolute feasibility tolerance on power quantities, in MW.
pub const TAU_FEAS: f64 = 1e-6;

/// Tolerance on KKT residuals reported by the dispatch solver.
pub const TAU_KKT: f64 = 1e-6;
