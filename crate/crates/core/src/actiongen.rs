//! Candidate action sets: one base action from a short lookahead
//! commitment solve, widened by a priority-ordered neighborhood of
//! toggle-problem solutions, all screened for next-period feasibility.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::env::MdpState;
use crate::error::Result;
use crate::exact::{
    solve_toggle_problem, solve_uc_bnb, BnbOutcome, ObjectiveMode, SolveBudget, UcSubproblem,
};
use crate::model::{GridSpec, LoadScenario};

/// Tuning of the candidate generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionGenConfig {
    /// Lookahead periods H of the base-action subproblem.
    pub horizon: usize,
    /// Search range below the base toggle count (Y-).
    pub search_down: usize,
    /// Search range above the base toggle count (Y+).
    pub search_up: usize,
    /// Solutions kept per toggle count (K).
    pub top_k: usize,
    /// Switching-term weight for the lookahead objective at t > 0.
    pub omega: f64,
    /// Node budget for the base-action solve; node-based so results do
    /// not depend on wall-clock timing.
    pub subproblem_nodes: u64,
}

impl Default for ActionGenConfig {
    fn default() -> Self {
        ActionGenConfig {
            horizon: 2,
            search_down: 1,
            search_up: 1,
            top_k: 1,
            omega: 2.0,
            subproblem_nodes: 200_000,
        }
    }
}

/// Units pinned for the next period, with the remaining lock lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct LockWindows {
    /// Units that cannot change status next period.
    pub theta: BTreeSet<usize>,
    /// Remaining must-stay-on periods per unit.
    pub sigma_up: Vec<u32>,
    /// Remaining must-stay-off periods per unit.
    pub sigma_dn: Vec<u32>,
}

/// Where a candidate came from, in canonical ordering: the base action
/// first, then toggle solutions by (z, rank).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Provenance {
    Base,
    Toggle { z: usize, rank: usize },
}

/// One candidate next-period commitment.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub v: Vec<bool>,
    pub provenance: Provenance,
}

/// The down-selected feasible action subset for one state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSet {
    /// Distinct members in canonical order (base first when present).
    pub members: Vec<Candidate>,
    /// Toggle count of the base action against the current commitment;
    /// zero when the base solve failed.
    pub x: usize,
    pub has_base: bool,
    /// Inclusive toggle-count range searched.
    pub z_range: (usize, usize),
    /// Candidates generated before deduplication, base included.
    pub raw_count: usize,
}

impl CandidateSet {
    /// An empty set: the episode is terminal.
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }
}

/// Units that cannot be toggled next period: held by minimum up/down
/// counters, by the shutdown ramp (output too high to stop), or out of
/// service.
pub fn compute_locks(state: &MdpState, grid: &GridSpec) -> LockWindows {
    let n = grid.n_units();
    let mut theta = BTreeSet::new();
    let mut sigma_up = vec![0u32; n];
    let mut sigma_dn = vec![0u32; n];
    for (i, unit) in grid.units.iter().enumerate() {
        if !unit.in_service {
            theta.insert(i);
            continue;
        }
        if state.v[i] {
            sigma_up[i] = unit.min_up.saturating_sub(state.u[i]);
            if sigma_up[i] > 0 || state.p[i] > unit.shutdown_ramp + crate::TAU_FEAS {
                theta.insert(i);
            }
        } else {
            sigma_dn[i] = unit.min_down.saturating_sub(state.u[i]);
            if sigma_dn[i] > 0 {
                theta.insert(i);
            }
        }
    }
    LockWindows {
        theta,
        sigma_up,
        sigma_dn,
    }
}

/// First-period commitment of the lookahead subproblem, or `None` when it
/// is infeasible or the budget produced no incumbent.
pub fn base_action(
    state: &MdpState,
    grid: &GridSpec,
    loads: &LoadScenario,
    horizon: usize,
    omega: f64,
    budget: &SolveBudget,
) -> Result<Option<Vec<bool>>> {
    let start = state.t;
    let available = loads.horizon.saturating_sub(start);
    let h = horizon.min(available);
    if h == 0 {
        return Ok(None);
    }
    let demand = loads.demand[start..start + h].to_vec();
    let mut sub = UcSubproblem::new(grid, demand, state.initial_condition());
    sub.objective_mode = if omega > 0.0 {
        ObjectiveMode::PriorityAugmented { omega }
    } else {
        ObjectiveMode::Plain
    };
    match solve_uc_bnb(&sub, budget) {
        Ok(BnbOutcome::Solved(solve)) => Ok(Some(solve.schedule.v[0].clone())),
        Ok(BnbOutcome::NoIncumbent { .. }) => Ok(None),
        Err(crate::UcError::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Builds the candidate set for a state: base action plus, for each
/// toggle count in the search range, the top-K toggle solutions,
/// deduplicated in canonical order. An empty result is meaningful — the
/// state is terminal.
pub fn build_candidate_set(
    state: &MdpState,
    grid: &GridSpec,
    loads: &LoadScenario,
    config: &ActionGenConfig,
) -> Result<CandidateSet> {
    let n = grid.n_units();
    if state.t >= loads.horizon {
        return Ok(CandidateSet::default());
    }
    let locks = compute_locks(state, grid);
    let omega = if state.t == 0 { 0.0 } else { config.omega };
    let budget = SolveBudget::nodes(config.subproblem_nodes);
    let base = base_action(state, grid, loads, config.horizon, omega, &budget)?;

    let (x, z_lo, z_hi) = match &base {
        Some(b) => {
            let x = b.iter().zip(&state.v).filter(|(a, c)| a != c).count();
            (
                x,
                x.saturating_sub(config.search_down),
                (x + config.search_up).min(n),
            )
        }
        // Without a base action there is no anchor for the range; scan
        // every toggle count so a feasible action is found whenever one
        // exists.
        None => (0, 0, n),
    };

    let mut raw_count = 0usize;
    let mut members: Vec<Candidate> = Vec::new();
    let push_unique = |v: Vec<bool>, provenance: Provenance, members: &mut Vec<Candidate>| {
        if !members.iter().any(|m| m.v == v) {
            members.push(Candidate { v, provenance });
        }
    };

    let has_base = base.is_some();
    if let Some(b) = base {
        raw_count += 1;
        push_unique(b, Provenance::Base, &mut members);
    }

    for z in z_lo..=z_hi {
        let mut sub = UcSubproblem::new(
            grid,
            vec![loads.demand[state.t].clone()],
            state.initial_condition(),
        );
        sub.toggle_count = Some(z);
        sub.excluded_units = locks.theta.clone();
        let solutions = solve_toggle_problem(&sub, config.top_k)?;
        for (rank, (v, _objective)) in solutions.into_iter().enumerate() {
            raw_count += 1;
            push_unique(v, Provenance::Toggle { z, rank }, &mut members);
        }
    }

    Ok(CandidateSet {
        members,
        x,
        has_base,
        z_range: (z_lo, z_hi),
        raw_count,
    })
}
