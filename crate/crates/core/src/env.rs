//! The sequential decision environment: fleet state, stepping with
//! dispatch-priced rewards, day handoff, and the feature encoding fed to
//! the Q-network.
//!
//! An environment owns a contiguous slice of the load scenario (its
//! training or evaluation days) and indexes periods locally, so forecasts
//! and lookaheads never read outside the slice. Training environments
//! wrap at the slice end (day rotation); evaluation environments report
//! end-of-data instead.

use serde::{Deserialize, Serialize};

use crate::actiongen::{build_candidate_set, ActionGenConfig, CandidateSet};
use crate::dispatch::{solve_ed, DispatchProblem};
use crate::error::{Result, UcError};
use crate::exact::{flips_allowed, ChainState, InitialCondition};
use crate::model::{
    shutdown_cost, startup_cost_from_counter, update_counter, GridSpec, LoadScenario, PeriodCost,
};

/// Periods per day; the time-of-day feature encodes `t` modulo this.
pub const PERIODS_PER_DAY: usize = 24;

/// The environment state: time, commitments, dispatch, status counters,
/// and the demand forecast window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpState {
    /// Periods already served, indexed locally within the environment's
    /// slice; the action taken here commits period `t+1`.
    pub t: usize,
    pub v: Vec<bool>,
    /// Dispatch of the period just served (MW).
    pub p: Vec<f64>,
    /// Consecutive periods each unit has held its status.
    pub u: Vec<u32>,
    /// Total-demand forecast for the next k periods, zero-padded past the
    /// end of the data.
    pub d: Vec<f64>,
}

impl MdpState {
    /// Canonical initial state at local period `t`, from the units'
    /// declared initial fields.
    pub fn initial(grid: &GridSpec, loads: &LoadScenario, t: usize, k: usize) -> Self {
        let init = InitialCondition::from_grid(grid);
        let mut state = MdpState {
            t,
            v: init.v,
            p: init.p,
            u: init.u,
            d: Vec::new(),
        };
        state.refresh_forecast(loads, k);
        state
    }

    /// View of this state as a subproblem initial condition.
    pub fn initial_condition(&self) -> InitialCondition {
        InitialCondition {
            v: self.v.clone(),
            p: self.p.clone(),
            u: self.u.clone(),
        }
    }

    pub(crate) fn refresh_forecast(&mut self, loads: &LoadScenario, k: usize) {
        self.d = (0..k)
            .map(|j| {
                let row = self.t + j;
                if row < loads.horizon {
                    loads.total(row)
                } else {
                    0.0
                }
            })
            .collect();
    }
}

/// One environment step, as stored in the learner's buffer.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: MdpState,
    pub action: Vec<bool>,
    /// Reward in dollars: minus the period cost, or minus the penalty on
    /// termination.
    pub reward: f64,
    pub next: MdpState,
    /// Candidate set of the next state; `None` only when the slice data
    /// ended (not a terminal).
    pub next_actions: Option<CandidateSet>,
    /// True when the next state has no feasible action.
    pub terminal: bool,
    /// Realized cost components of the served period.
    pub cost: PeriodCost,
}

/// Environment tuning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Termination penalty, in dollars.
    pub zeta: f64,
    /// Forecast window k.
    pub forecast_window: usize,
}

/// Default termination penalty: ten times the fleet-wide one-period
/// production cost at full output.
pub fn default_zeta(grid: &GridSpec) -> f64 {
    10.0 * grid
        .units
        .iter()
        .filter(|u| u.in_service)
        .map(|u| u.a + u.b * u.p_max + u.c * u.p_max * u.p_max)
        .sum::<f64>()
}

/// A day-structured environment over a slice of the load scenario.
#[derive(Debug, Clone)]
pub struct Env<'a> {
    pub grid: &'a GridSpec,
    /// The slice this environment may see (local period 0 = slice start).
    pub loads: LoadScenario,
    /// Wrap to local period 0 at the slice end (training day rotation).
    pub wrap: bool,
    pub actions: ActionGenConfig,
    pub config: EnvConfig,
}

impl<'a> Env<'a> {
    /// Builds an environment over `days` whole days of `loads` starting
    /// at day `first_day`.
    pub fn over_days(
        grid: &'a GridSpec,
        loads: &LoadScenario,
        first_day: usize,
        days: usize,
        wrap: bool,
        actions: ActionGenConfig,
        config: EnvConfig,
    ) -> Result<Self> {
        let slice = loads.slice(first_day * PERIODS_PER_DAY, days * PERIODS_PER_DAY)?;
        Ok(Env {
            grid,
            loads: slice,
            wrap,
            actions,
            config,
        })
    }

    /// Number of whole days in the slice.
    pub fn n_days(&self) -> usize {
        self.loads.horizon / PERIODS_PER_DAY
    }

    /// Initial state of a local day: the carryover state rebased to the
    /// day start when given, else the canonical initial state.
    pub fn reset(&self, day: usize, carryover: Option<&MdpState>) -> MdpState {
        let t = day * PERIODS_PER_DAY;
        let mut state = match carryover {
            Some(prev) => MdpState {
                t,
                v: prev.v.clone(),
                p: prev.p.clone(),
                u: prev.u.clone(),
                d: Vec::new(),
            },
            None => MdpState::initial(self.grid, &self.loads, t, self.config.forecast_window),
        };
        state.refresh_forecast(&self.loads, self.config.forecast_window);
        state
    }

    /// Candidate actions of a state.
    pub fn candidate_set(&self, state: &MdpState) -> Result<CandidateSet> {
        build_candidate_set(state, self.grid, &self.loads, &self.actions)
    }

    /// Applies an action: dispatches the next period, prices the reward,
    /// advances counters, and computes the successor's candidate set.
    pub fn step(&self, state: &MdpState, action: &[bool]) -> Result<Transition> {
        if state.t >= self.loads.horizon {
            return Err(UcError::ContractViolation(
                "step past the end of the data slice".into(),
            ));
        }
        let chain = ChainState {
            v: state.v.clone(),
            p: state.p.clone(),
            u: state.u.clone(),
        };
        if !flips_allowed(self.grid, &chain, action) {
            return Err(UcError::ContractViolation(
                "action violates lock windows".into(),
            ));
        }
        let demand_row = &self.loads.demand[state.t];
        let total: f64 = demand_row.iter().sum();
        let problem = DispatchProblem {
            grid: self.grid,
            period_demand: demand_row,
            v: action,
            p_prev: &state.p,
            v_prev: &state.v,
            v_next: None,
            reserve_req: self.grid.reserve_requirement(total),
        };
        let solution = solve_ed(&problem, crate::TAU_KKT)?;
        if !solution.is_feasible_with_reserve() {
            return Err(UcError::ContractViolation(format!(
                "action infeasible under dispatch at period {}: {:?}",
                state.t + 1,
                solution.status
            )));
        }

        let mut cost = PeriodCost {
            production: solution.production_cost,
            startup: 0.0,
            shutdown: 0.0,
        };
        for (i, unit) in self.grid.units.iter().enumerate() {
            cost.startup += startup_cost_from_counter(unit, state.u[i], state.v[i], action[i]);
            cost.shutdown += shutdown_cost(unit, state.v[i], action[i]);
        }

        let mut next = MdpState {
            t: state.t + 1,
            v: action.to_vec(),
            p: solution.p,
            u: state
                .u
                .iter()
                .zip(state.v.iter().zip(action))
                .map(|(&u, (&vp, &vn))| update_counter(u, vp, vn))
                .collect(),
            d: Vec::new(),
        };
        let end_of_data = next.t >= self.loads.horizon;
        if end_of_data && self.wrap {
            next.t = 0;
        }
        next.refresh_forecast(&self.loads, self.config.forecast_window);

        let next_actions = if end_of_data && !self.wrap {
            None
        } else {
            Some(self.candidate_set(&next)?)
        };
        let terminal = next_actions.as_ref().is_some_and(CandidateSet::is_empty);
        let reward = if terminal {
            -self.config.zeta
        } else {
            -cost.total()
        };

        Ok(Transition {
            state: state.clone(),
            action: action.to_vec(),
            reward,
            next,
            next_actions,
            terminal,
            cost,
        })
    }
}

/// Fixed-width feature vector for a state-action pair: time-of-day
/// coordinates, commitment, normalized dispatch, clipped-normalized
/// counters, normalized forecast, and the action bits. Length
/// `4N + k + 2`. All entries stay in [-1, 1] while demand does not exceed
/// the fleet capacity.
pub fn encode_features(state: &MdpState, action: &[bool], grid: &GridSpec) -> Vec<f64> {
    let n = grid.n_units();
    let k = state.d.len();
    let mut features = Vec::with_capacity(4 * n + k + 2);
    let angle = 2.0 * std::f64::consts::PI * (state.t as f64) / (PERIODS_PER_DAY as f64);
    features.push(angle.cos());
    features.push(angle.sin());
    for &v in &state.v {
        features.push(f64::from(u8::from(v)));
    }
    for (i, unit) in grid.units.iter().enumerate() {
        features.push(if unit.p_max > 0.0 {
            state.p[i] / unit.p_max
        } else {
            0.0
        });
    }
    let cap = f64::from(grid.counter_cap());
    for &u in &state.u {
        features.push(f64::from(u.min(grid.counter_cap())) / cap);
    }
    let total_cap = grid.units.iter().map(|u| u.p_max).sum::<f64>().max(1.0);
    for &d in &state.d {
        features.push(d / total_cap);
    }
    for &a in action {
        features.push(f64::from(u8::from(a)));
    }
    features
}
