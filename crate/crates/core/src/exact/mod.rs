//! Exact commitment solvers at desk scale.
//!
//! Subproblems are priced sequentially: a commitment matrix is evaluated by
//! chaining one-period economic dispatches, with startup costs taken from
//! the on/off counters propagated along the chain. [`enumerate_uc`] is the
//! exhaustive oracle; [`solve_uc_bnb`] is the budgeted branch-and-bound
//! used as the baseline and as the lookahead subproblem engine;
//! [`solve_toggle_problem`] ranks single-period status changes by unit
//! priority.

mod bnb;
mod enumerate;
mod toggle;

pub use bnb::{solve_uc_bnb, BnbOutcome, BnbSolve};
pub use enumerate::enumerate_uc;
pub use toggle::solve_toggle_problem;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use crate::dispatch::{solve_ed, DispatchProblem, DispatchSolution};
use crate::error::{Result, UcError};
use crate::model::{
    average_fuel_price, shutdown_cost, startup_cost_from_counter, update_counter, GridSpec,
    PeriodCost, Schedule,
};

/// Hard cap on `units x periods` for exhaustive enumeration.
pub const ENUMERATION_CAP: usize = 20;

/// Objective of a subproblem: plain operating cost, or cost plus the
/// priority-weighted switching term used for lookahead base actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveMode {
    Plain,
    /// Adds `omega * sum_k sum_i (v_i(k+1) - v_i(k)) * rho_i` over the
    /// window, with the last period's successor taken as itself.
    PriorityAugmented { omega: f64 },
}

impl ObjectiveMode {
    pub(crate) fn omega(&self) -> f64 {
        match self {
            ObjectiveMode::Plain => 0.0,
            ObjectiveMode::PriorityAugmented { omega } => *omega,
        }
    }
}

/// The generator fleet state a subproblem starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub v: Vec<bool>,
    pub p: Vec<f64>,
    pub u: Vec<u32>,
}

impl InitialCondition {
    /// Initial condition taken from the units' declared initial fields.
    /// An out-of-service unit enters as off at zero output with its
    /// counter set to its minimum off-time limit.
    pub fn from_grid(grid: &GridSpec) -> Self {
        InitialCondition {
            v: grid
                .units
                .iter()
                .map(|u| u.init_status && u.in_service)
                .collect(),
            p: grid
                .units
                .iter()
                .map(|u| if u.in_service { u.initial_power() } else { 0.0 })
                .collect(),
            u: grid
                .units
                .iter()
                .map(|u| if u.in_service { u.init_duration } else { u.min_down })
                .collect(),
        }
    }
}

/// A commitment subproblem over a short horizon.
#[derive(Debug, Clone)]
pub struct UcSubproblem<'a> {
    pub grid: &'a GridSpec,
    /// Per-bus demand rows, one per subproblem period.
    pub demand: Vec<Vec<f64>>,
    pub initial: InitialCondition,
    pub objective_mode: ObjectiveMode,
    /// Pins `(period, unit)` statuses (0-based local period).
    pub fixed_statuses: BTreeMap<(usize, usize), bool>,
    /// Exact number of first-period status changes, when constrained.
    pub toggle_count: Option<usize>,
    /// Units whose first-period status must not change.
    pub excluded_units: BTreeSet<usize>,
}

impl<'a> UcSubproblem<'a> {
    /// A plain subproblem over the given demand rows.
    pub fn new(grid: &'a GridSpec, demand: Vec<Vec<f64>>, initial: InitialCondition) -> Self {
        UcSubproblem {
            grid,
            demand,
            initial,
            objective_mode: ObjectiveMode::Plain,
            fixed_statuses: BTreeMap::new(),
            toggle_count: None,
            excluded_units: BTreeSet::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.demand.len()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let n = self.grid.n_units();
        if self.horizon() == 0 {
            return Err(UcError::Dimension("subproblem horizon must be >= 1".into()));
        }
        for row in &self.demand {
            if row.len() != self.grid.n_buses {
                return Err(UcError::Dimension(
                    "demand row width disagrees with bus count".into(),
                ));
            }
        }
        if self.initial.v.len() != n || self.initial.p.len() != n || self.initial.u.len() != n {
            return Err(UcError::Dimension(
                "initial condition width disagrees with unit count".into(),
            ));
        }
        Ok(())
    }

    /// Total demand of a local period.
    pub(crate) fn total_demand(&self, t: usize) -> f64 {
        self.demand[t].iter().sum()
    }

    pub(crate) fn reserve_req(&self, t: usize) -> f64 {
        self.grid.reserve_requirement(self.total_demand(t))
    }
}

/// Solve budget for the branch-and-bound solver. At least one limit must
/// be finite.
#[derive(Debug, Clone, Copy)]
pub struct SolveBudget {
    pub time_limit: Option<Duration>,
    /// Relative optimality gap at which the search may stop.
    pub gap_target: Option<f64>,
    /// Maximum number of node expansions.
    pub node_limit: Option<u64>,
}

impl SolveBudget {
    pub fn new(
        time_limit: Option<Duration>,
        gap_target: Option<f64>,
        node_limit: Option<u64>,
    ) -> Result<Self> {
        if time_limit.is_none() && gap_target.is_none() && node_limit.is_none() {
            return Err(UcError::Config(
                "solve budget needs at least one finite limit".into(),
            ));
        }
        Ok(SolveBudget {
            time_limit,
            gap_target,
            node_limit,
        })
    }

    /// Run to proved optimality, however long it takes.
    pub fn exhaustive() -> Self {
        SolveBudget {
            time_limit: None,
            gap_target: Some(0.0),
            node_limit: None,
        }
    }

    /// Deterministic node-count budget.
    pub fn nodes(limit: u64) -> Self {
        SolveBudget {
            time_limit: None,
            gap_target: Some(0.0),
            node_limit: Some(limit),
        }
    }
}

/// Fleet state carried along a pricing chain.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ChainState {
    pub v: Vec<bool>,
    pub p: Vec<f64>,
    pub u: Vec<u32>,
}

impl ChainState {
    pub(crate) fn from_initial(init: &InitialCondition) -> Self {
        ChainState {
            v: init.v.clone(),
            p: init.p.clone(),
            u: init.u.clone(),
        }
    }

    pub(crate) fn advance(&self, v_now: &[bool], p_now: &[f64]) -> ChainState {
        let u = self
            .u
            .iter()
            .zip(self.v.iter().zip(v_now))
            .map(|(&u, (&vp, &vn))| update_counter(u, vp, vn))
            .collect();
        ChainState {
            v: v_now.to_vec(),
            p: p_now.to_vec(),
            u,
        }
    }
}

/// Whether shifting to `v_now` from `state` respects minimum up/down
/// times, the shutdown ramp, and unit availability.
pub(crate) fn flips_allowed(grid: &GridSpec, state: &ChainState, v_now: &[bool]) -> bool {
    for (i, unit) in grid.units.iter().enumerate() {
        if v_now[i] && !unit.in_service {
            return false;
        }
        if v_now[i] == state.v[i] {
            continue;
        }
        if state.v[i] {
            if state.u[i] < unit.min_up || state.p[i] > unit.shutdown_ramp + crate::TAU_FEAS {
                return false;
            }
        } else if state.u[i] < unit.min_down {
            return false;
        }
    }
    true
}

/// Prices one period: dispatch under `v_now` given the chain state, plus
/// switching costs from the counters. Returns `None` when the period is
/// infeasible (dispatch or reserve).
pub(crate) fn price_period(
    grid: &GridSpec,
    demand_row: &[f64],
    reserve_req: f64,
    state: &ChainState,
    v_now: &[bool],
    v_after: Option<&[bool]>,
) -> Result<Option<(PeriodCost, DispatchSolution)>> {
    let problem = DispatchProblem {
        grid,
        period_demand: demand_row,
        v: v_now,
        p_prev: &state.p,
        v_prev: &state.v,
        v_next: v_after,
        reserve_req,
    };
    let solution = solve_ed(&problem, crate::TAU_KKT)?;
    if !solution.is_feasible_with_reserve() {
        return Ok(None);
    }
    let mut cost = PeriodCost {
        production: solution.production_cost,
        startup: 0.0,
        shutdown: 0.0,
    };
    for (i, unit) in grid.units.iter().enumerate() {
        cost.startup += startup_cost_from_counter(unit, state.u[i], state.v[i], v_now[i]);
        cost.shutdown += shutdown_cost(unit, state.v[i], v_now[i]);
    }
    Ok(Some((cost, solution)))
}

/// Priority-weighted switching term between two consecutive window
/// periods: `omega * sum_i (after_i - before_i) * rho_i`.
pub(crate) fn priority_term(rho: &[f64], omega: f64, before: &[bool], after: &[bool]) -> f64 {
    if omega == 0.0 {
        return 0.0;
    }
    omega
        * rho
            .iter()
            .zip(before.iter().zip(after))
            .map(|(&r, (&b, &a))| (f64::from(u8::from(a)) - f64::from(u8::from(b))) * r)
            .sum::<f64>()
}

/// Average fuel prices of all units; out-of-service units get infinity so
/// priority orderings never select them.
pub(crate) fn fuel_prices(grid: &GridSpec) -> Result<Vec<f64>> {
    grid.units
        .iter()
        .map(|u| {
            if u.in_service {
                average_fuel_price(u)
            } else {
                Ok(f64::INFINITY)
            }
        })
        .collect()
}

/// Replays a status-matrix chain and assembles the full schedule with its
/// cost breakdown and (optionally priority-augmented) objective. The
/// matrix must already be feasible.
pub(crate) fn replay_schedule(
    sub: &UcSubproblem,
    statuses: &[Vec<bool>],
) -> Result<(Schedule, f64)> {
    let horizon = sub.horizon();
    let rho = fuel_prices(sub.grid)?;
    let omega = sub.objective_mode.omega();
    let mut state = ChainState::from_initial(&sub.initial);
    let mut v = Vec::with_capacity(horizon);
    let mut p = Vec::with_capacity(horizon);
    let mut breakdown = Vec::with_capacity(horizon);
    let mut objective = 0.0;
    for t in 0..horizon {
        let v_after = statuses.get(t + 1).map(Vec::as_slice);
        let priced = price_period(
            sub.grid,
            &sub.demand[t],
            sub.reserve_req(t),
            &state,
            &statuses[t],
            v_after,
        )?
        .ok_or_else(|| UcError::Infeasible(format!("replay failed at period {}", t + 1)))?;
        let (cost, solution) = priced;
        objective += cost.total();
        if t + 1 < horizon {
            objective += priority_term(&rho, omega, &statuses[t], &statuses[t + 1]);
        }
        state = state.advance(&statuses[t], &solution.p);
        v.push(statuses[t].clone());
        p.push(solution.p);
        breakdown.push(cost);
    }
    Ok((
        Schedule {
            v,
            p,
            cost_breakdown: breakdown,
        },
        objective,
    ))
}

/// Iterates status vectors for one period in lexicographic order
/// (unit 0 most significant, off before on).
pub(crate) fn status_vectors_lex(n: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u64..(1u64 << n)).map(move |code| (0..n).map(|i| code >> (n - 1 - i) & 1 == 1).collect())
}

/// Checks the first-period structural constraints of a subproblem: pinned
/// statuses, the exact toggle count, and the excluded set.
pub(crate) fn first_period_ok(sub: &UcSubproblem, v_first: &[bool]) -> bool {
    for (&(t, i), &status) in &sub.fixed_statuses {
        if t == 0 && v_first[i] != status {
            return false;
        }
    }
    for &i in &sub.excluded_units {
        if v_first[i] != sub.initial.v[i] {
            return false;
        }
    }
    if let Some(z) = sub.toggle_count {
        let toggles = v_first
            .iter()
            .zip(&sub.initial.v)
            .filter(|(a, b)| a != b)
            .count();
        if toggles != z {
            return false;
        }
    }
    true
}

/// Checks pinned statuses for a later period.
pub(crate) fn fixed_ok(sub: &UcSubproblem, t: usize, v_t: &[bool]) -> bool {
    sub.fixed_statuses
        .iter()
        .all(|(&(ft, fi), &status)| ft != t || v_t[fi] == status)
}
