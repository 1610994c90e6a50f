//! Exhaustive commitment search, the test oracle for the branch-and-bound
//! solver. Walks every feasible commitment matrix in lexicographic order
//! of the flattened matrix (periods outer, units inner) and keeps the
//! first strictly best objective, so ties resolve to the lexicographically
//! smallest matrix.

use crate::error::{Result, UcError};
use crate::exact::{
    first_period_ok, fixed_ok, flips_allowed, fuel_prices, price_period, priority_term,
    replay_schedule, status_vectors_lex, ChainState, UcSubproblem, ENUMERATION_CAP,
};
use crate::model::{update_counter, GridSpec, Schedule};

/// Globally optimal schedule by exhaustive enumeration. Refuses instances
/// with more than [`ENUMERATION_CAP`] commitment binaries.
pub fn enumerate_uc(sub: &UcSubproblem) -> Result<(Schedule, f64)> {
    sub.validate()?;
    let n = sub.grid.n_units();
    let horizon = sub.horizon();
    let binaries = n * horizon;
    if binaries > ENUMERATION_CAP {
        return Err(UcError::EnumerationCap {
            binaries,
            cap: ENUMERATION_CAP,
        });
    }

    let rho = fuel_prices(sub.grid)?;
    let omega = sub.objective_mode.omega();
    // One net switch per unit over any remaining window (the terms
    // telescope), so the remaining priority sum is at least -omega*sum(rho).
    let priority_slack = omega
        * rho
            .iter()
            .filter(|r| r.is_finite())
            .sum::<f64>()
            .max(0.0);

    let mut walker = Walker {
        sub,
        rho: &rho,
        omega,
        priority_slack,
        stack: Vec::with_capacity(horizon),
        best: None,
    };
    let root = ChainState::from_initial(&sub.initial);
    walker.descend(&root, 0.0)?;

    match walker.best {
        Some((_, statuses)) => replay_schedule(sub, &statuses),
        None => Err(UcError::Infeasible(
            "no feasible commitment matrix".to_string(),
        )),
    }
}

struct Walker<'a, 'g> {
    sub: &'a UcSubproblem<'g>,
    rho: &'a [f64],
    omega: f64,
    priority_slack: f64,
    stack: Vec<Vec<bool>>,
    best: Option<(f64, Vec<Vec<bool>>)>,
}

impl Walker<'_, '_> {
    /// Extends the matrix one period. A period's dispatch depends on its
    /// successor's commitment (the shutdown ramp cap), so period `t-1` is
    /// priced while choosing period `t`; `state` trails one period behind
    /// the stack.
    fn descend(&mut self, state: &ChainState, pending: f64) -> Result<()> {
        let t = self.stack.len();
        let horizon = self.sub.horizon();
        if t == horizon {
            let v_last = self.stack.last().unwrap();
            if let Some((cost, _)) = price_period(
                self.sub.grid,
                &self.sub.demand[t - 1],
                self.sub.reserve_req(t - 1),
                state,
                v_last,
                None,
            )? {
                let total = pending + cost.total();
                if self.best.as_ref().is_none_or(|(b, _)| total < *b) {
                    self.best = Some((total, self.stack.clone()));
                }
            }
            return Ok(());
        }

        let candidates: Vec<Vec<bool>> = status_vectors_lex(self.sub.grid.n_units()).collect();
        for v_t in candidates {
            let structural = if t == 0 {
                first_period_ok(self.sub, &v_t)
            } else {
                fixed_ok(self.sub, t, &v_t)
            };
            if !structural {
                continue;
            }
            if t == 0 {
                if !flips_allowed(self.sub.grid, state, &v_t) {
                    continue;
                }
                self.stack.push(v_t);
                self.descend(state, pending)?;
                self.stack.pop();
                continue;
            }

            let v_prev_period = self.stack[t - 1].clone();
            if !counter_locks_ok(self.sub.grid, state, &v_prev_period, &v_t) {
                continue;
            }
            let Some((cost, solution)) = price_period(
                self.sub.grid,
                &self.sub.demand[t - 1],
                self.sub.reserve_req(t - 1),
                state,
                &v_prev_period,
                Some(&v_t),
            )?
            else {
                continue;
            };
            let running =
                pending + cost.total() + priority_term(self.rho, self.omega, &v_prev_period, &v_t);
            if let Some((b, _)) = &self.best {
                if running - self.priority_slack >= *b {
                    continue;
                }
            }
            let next_state = state.advance(&v_prev_period, &solution.p);
            self.stack.push(v_t);
            self.descend(&next_state, running)?;
            self.stack.pop();
        }
        Ok(())
    }
}

/// Minimum up/down lock check for the flip into `v_new`, with counters
/// advanced through the period being left. The shutdown-ramp side is
/// enforced by the dispatch cap when the period is priced.
fn counter_locks_ok(grid: &GridSpec, state: &ChainState, v_prev: &[bool], v_new: &[bool]) -> bool {
    for (i, unit) in grid.units.iter().enumerate() {
        if v_new[i] && !unit.in_service {
            return false;
        }
        if v_new[i] == v_prev[i] {
            continue;
        }
        let u_after = update_counter(state.u[i], state.v[i], v_prev[i]);
        if v_prev[i] {
            if u_after < unit.min_up {
                return false;
            }
        } else if u_after < unit.min_down {
            return false;
        }
    }
    true
}
