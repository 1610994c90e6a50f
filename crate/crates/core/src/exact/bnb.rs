//! Depth-first branch and bound over commitment matrices.
//!
//! Nodes fix commitment rows period by period; a period is priced (one
//! chained economic dispatch) when its successor row is chosen, exactly as
//! in the enumeration oracle, so both solvers optimize the same objective.
//!
//! Two lower bounds are combined:
//!
//! * the continuous relaxation, where commitment enters the bounds
//!   linearly (`0 <= p_i <= Pmax_i`, production cost underestimated by
//!   `(a_i/Pmax_i + b_i) p + c_i p^2`) and switching costs drop to zero;
//! * a per-status dynamic-programming completion bound built from
//!   ramp-relaxed dispatches and cheapest-stair switching, which is much
//!   tighter and makes desk-scale proofs fast. Used when the fleet is
//!   small enough to tabulate.

use std::time::Instant;

use crate::dispatch::solve_ed_with_bounds;
use crate::error::{Result, UcError};
use crate::exact::{
    first_period_ok, fixed_ok, flips_allowed, fuel_prices, price_period, priority_term,
    replay_schedule, ChainState, SolveBudget, UcSubproblem,
};
use crate::model::{startup_cost_from_counter, update_counter, GridSpec, Schedule};

/// Fleet sizes up to this get the tabulated completion bound.
const DP_UNIT_CAP: usize = 10;
/// Guard against float noise when pruning against the incumbent.
const PRUNE_EPS_REL: f64 = 1e-9;

/// A finished branch-and-bound run with an incumbent.
#[derive(Debug, Clone)]
pub struct BnbSolve {
    pub schedule: Schedule,
    /// Objective value (operating cost, plus the priority term when the
    /// subproblem is priority-augmented).
    pub objective: f64,
    /// Valid global lower bound on the objective.
    pub lower_bound: f64,
    /// `(objective - lower_bound) / |objective|`.
    pub gap: f64,
    pub proved_optimal: bool,
    pub nodes_explored: u64,
}

/// Outcome of a budgeted solve.
#[derive(Debug, Clone)]
pub enum BnbOutcome {
    Solved(BnbSolve),
    /// Budget ran out before any incumbent was found; the bound is still
    /// valid.
    NoIncumbent {
        lower_bound: f64,
        nodes_explored: u64,
    },
}

impl BnbOutcome {
    pub fn solved(self) -> Result<BnbSolve> {
        match self {
            BnbOutcome::Solved(s) => Ok(s),
            BnbOutcome::NoIncumbent { .. } => Err(UcError::Infeasible(
                "budget exhausted without an incumbent".into(),
            )),
        }
    }
}

struct Node {
    /// Fixed commitment rows as bitmasks, unit 0 at the highest bit kept
    /// conceptual only; bit i = unit i.
    masks: Vec<u64>,
    /// Chain state after the second-to-last fixed period (pricing trails
    /// one period behind the fixed rows).
    state: ChainState,
    /// Priced objective so far (excludes the last fixed period entirely).
    pending: f64,
    bound: f64,
}

/// Branch-and-bound solve of a commitment subproblem under a budget.
pub fn solve_uc_bnb(sub: &UcSubproblem, budget: &SolveBudget) -> Result<BnbOutcome> {
    sub.validate()?;
    let grid = sub.grid;
    let n = grid.n_units();
    if n >= 64 {
        return Err(UcError::Dimension("bitmask solver caps at 63 units".into()));
    }
    let horizon = sub.horizon();
    let rho = fuel_prices(grid)?;
    let omega = sub.objective_mode.omega();
    let start = Instant::now();

    let tables = BoundTables::build(sub, &rho, omega)?;
    let root_state = ChainState::from_initial(&sub.initial);
    let root_mask = vec_to_mask(&root_state.v);
    let root_bound = tables.root_bound(sub, &root_state, root_mask);

    let mut incumbent: Option<(f64, Vec<u64>)> = None;
    let mut nodes: u64 = 0;
    let mut stack: Vec<Node> = Vec::new();
    let mut budget_hit = false;

    // Seed with the root's children (period-1 rows).
    expand_root(sub, &tables, &root_state, &mut stack, &incumbent);

    while let Some(node) = stack.pop() {
        if let Some(limit) = budget.node_limit {
            if nodes >= limit {
                stack.push(node);
                budget_hit = true;
                break;
            }
        }
        if nodes.is_multiple_of(256) {
            if let Some(limit) = budget.time_limit {
                if start.elapsed() >= limit {
                    stack.push(node);
                    budget_hit = true;
                    break;
                }
            }
            if let (Some(target), Some((inc, _))) = (budget.gap_target, &incumbent) {
                if target > 0.0 {
                    let lb = stack
                        .iter()
                        .map(|nd| nd.bound)
                        .fold(node.bound, f64::min)
                        .max(root_bound);
                    if relative_gap(*inc, lb) <= target {
                        stack.push(node);
                        budget_hit = true;
                        break;
                    }
                }
            }
        }
        nodes += 1;

        if let Some((inc, _)) = &incumbent {
            if node.bound >= inc - PRUNE_EPS_REL * (1.0 + inc.abs()) {
                continue;
            }
        }
        let k = node.masks.len();
        let last_row = mask_to_vec(node.masks[k - 1], n);

        if k == horizon {
            // Complete: price the final period under the edge rule.
            if let Some((cost, _)) = price_period(
                grid,
                &sub.demand[k - 1],
                sub.reserve_req(k - 1),
                &node.state,
                &last_row,
                None,
            )? {
                let total = node.pending + cost.total();
                if incumbent.as_ref().is_none_or(|(b, _)| total < *b) {
                    incumbent = Some((total, node.masks.clone()));
                }
            }
            continue;
        }

        // Children: each candidate next row prices the node's last row.
        let mut children: Vec<Node> = Vec::new();
        for next_mask in 0u64..(1 << n) {
            let next_row = mask_to_vec(next_mask, n);
            if !fixed_ok(sub, k, &next_row)
                || !counter_locks_ok(grid, &node.state, &last_row, &next_row)
            {
                continue;
            }
            let Some((cost, solution)) = price_period(
                grid,
                &sub.demand[k - 1],
                sub.reserve_req(k - 1),
                &node.state,
                &last_row,
                Some(&next_row),
            )?
            else {
                continue;
            };
            let state = node.state.advance(&last_row, &solution.p);
            let pending =
                node.pending + cost.total() + priority_term(&rho, omega, &last_row, &next_row);
            let bound = pending
                + exact_switch_cost(grid, &state, &next_row)
                + tables.completion(k, next_mask);
            if !bound.is_finite() {
                continue;
            }
            if let Some((inc, _)) = &incumbent {
                if bound >= inc - PRUNE_EPS_REL * (1.0 + inc.abs()) {
                    continue;
                }
            }
            let mut masks = node.masks.clone();
            masks.push(next_mask);
            children.push(Node {
                masks,
                state,
                pending,
                bound,
            });
        }
        // Best bound explored first.
        children.sort_by(|a, b| {
            b.bound
                .partial_cmp(&a.bound)
                .unwrap()
                .then(b.masks[k].cmp(&a.masks[k]))
        });
        stack.extend(children);
    }

    let open_bound = stack
        .iter()
        .map(|nd| nd.bound)
        .fold(f64::INFINITY, f64::min);
    match incumbent {
        Some((objective, masks)) => {
            let lower_bound = objective.min(open_bound).max(root_bound);
            let proved_optimal = !budget_hit && stack.is_empty();
            let lower_bound = if proved_optimal { objective } else { lower_bound };
            let statuses: Vec<Vec<bool>> = masks.iter().map(|&m| mask_to_vec(m, n)).collect();
            let (schedule, replayed) = replay_schedule(sub, &statuses)?;
            debug_assert!((replayed - objective).abs() <= 1e-6 * (1.0 + objective.abs()));
            Ok(BnbOutcome::Solved(BnbSolve {
                schedule,
                objective,
                lower_bound,
                gap: relative_gap(objective, lower_bound),
                proved_optimal,
                nodes_explored: nodes,
            }))
        }
        None if budget_hit => Ok(BnbOutcome::NoIncumbent {
            lower_bound: open_bound.min(f64::INFINITY).max(root_bound),
            nodes_explored: nodes,
        }),
        None => Err(UcError::Infeasible(
            "no feasible commitment matrix".to_string(),
        )),
    }
}

fn expand_root(
    sub: &UcSubproblem,
    tables: &BoundTables,
    root_state: &ChainState,
    stack: &mut Vec<Node>,
    incumbent: &Option<(f64, Vec<u64>)>,
) {
    let n = sub.grid.n_units();
    let mut children: Vec<Node> = Vec::new();
    for mask in 0u64..(1 << n) {
        let row = mask_to_vec(mask, n);
        if !first_period_ok(sub, &row) || !flips_allowed(sub.grid, root_state, &row) {
            continue;
        }
        let bound = exact_switch_cost(sub.grid, root_state, &row) + tables.completion(0, mask);
        if !bound.is_finite() {
            continue;
        }
        if let Some((inc, _)) = incumbent {
            if bound >= inc - PRUNE_EPS_REL * (1.0 + inc.abs()) {
                continue;
            }
        }
        children.push(Node {
            masks: vec![mask],
            state: root_state.clone(),
            pending: 0.0,
            bound,
        });
    }
    children.sort_by(|a, b| {
        b.bound
            .partial_cmp(&a.bound)
            .unwrap()
            .then(b.masks[0].cmp(&a.masks[0]))
    });
    stack.extend(children);
}

/// Startup (counter stair) plus shutdown cost for shifting from the chain
/// state to `row`.
fn exact_switch_cost(grid: &GridSpec, state: &ChainState, row: &[bool]) -> f64 {
    grid.units
        .iter()
        .enumerate()
        .map(|(i, unit)| {
            startup_cost_from_counter(unit, state.u[i], state.v[i], row[i])
                + crate::model::shutdown_cost(unit, state.v[i], row[i])
        })
        .sum()
}

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

pub(crate) fn mask_to_vec(mask: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> i & 1 == 1).collect()
}

pub(crate) fn vec_to_mask(v: &[bool]) -> u64 {
    v.iter()
        .enumerate()
        .fold(0u64, |m, (i, &b)| m | (u64::from(b) << i))
}

/// Completion bounds: either the tabulated DP over statuses or the
/// status-independent continuous-envelope suffix sums.
enum BoundTables {
    Dp {
        /// `stage[t][mask]`: ramp-relaxed dispatch cost of period t under
        /// the status mask (infinity when infeasible).
        stage: Vec<Vec<f64>>,
        /// `value[t][mask]`: cheapest completion of periods t+1.. from a
        /// period-t status, with cheapest-stair switching.
        value: Vec<Vec<f64>>,
        envelope_total: f64,
    },
    Envelope {
        /// Suffix sums of the per-period envelope bounds.
        suffix: Vec<f64>,
        priority_slack: f64,
    },
}

impl BoundTables {
    fn build(sub: &UcSubproblem, rho: &[f64], omega: f64) -> Result<Self> {
        let grid = sub.grid;
        let n = grid.n_units();
        let horizon = sub.horizon();
        let envelope: Vec<f64> = (0..horizon)
            .map(|t| envelope_period_bound(grid, sub.total_demand(t)))
            .collect();
        // The remaining priority terms telescope to one net switch per
        // unit, so they are bounded below by -omega * sum(rho).
        let priority_slack = omega * rho.iter().filter(|r| r.is_finite()).sum::<f64>().max(0.0);

        if n > DP_UNIT_CAP {
            let mut suffix = vec![0.0; horizon + 1];
            for t in (0..horizon).rev() {
                suffix[t] = suffix[t + 1] + envelope[t];
            }
            return Ok(BoundTables::Envelope {
                suffix,
                priority_slack,
            });
        }

        let size = 1usize << n;
        let mut stage = vec![vec![f64::INFINITY; size]; horizon];
        for (t, row) in stage.iter_mut().enumerate() {
            let demand = &sub.demand[t];
            let total = sub.total_demand(t);
            let reserve = sub.reserve_req(t);
            for (mask, slot) in row.iter_mut().enumerate() {
                let v = mask_to_vec(mask as u64, n);
                if v
                    .iter()
                    .zip(&grid.units)
                    .any(|(&on, u)| on && !u.in_service)
                {
                    continue;
                }
                let cap: f64 = v
                    .iter()
                    .zip(&grid.units)
                    .filter(|(&on, _)| on)
                    .map(|(_, u)| u.p_max)
                    .sum();
                if cap + crate::TAU_FEAS < total + reserve {
                    continue; // reserve can never hold
                }
                let lo: Vec<f64> = v
                    .iter()
                    .zip(&grid.units)
                    .map(|(&on, u)| if on { u.p_min } else { 0.0 })
                    .collect();
                let hi: Vec<f64> = v
                    .iter()
                    .zip(&grid.units)
                    .map(|(&on, u)| if on { u.p_max } else { 0.0 })
                    .collect();
                let sol = solve_ed_with_bounds(grid, demand, &v, &lo, &hi)?;
                if sol.is_optimal() {
                    *slot = sol.production_cost;
                }
            }
        }

        // Backward DP over statuses with cheapest-stair switching and the
        // exact pairwise priority term.
        let mut value = vec![vec![f64::INFINITY; size]; horizon];
        for slot in value[horizon - 1].iter_mut() {
            *slot = 0.0;
        }
        for t in (0..horizon - 1).rev() {
            for from in 0..size {
                let mut best = f64::INFINITY;
                for to in 0..size {
                    let tail = stage[t + 1][to] + value[t + 1][to];
                    if !tail.is_finite() {
                        continue;
                    }
                    let candidate = tail + switch_lower_bound(grid, rho, omega, from, to);
                    if candidate < best {
                        best = candidate;
                    }
                }
                value[t][from] = best;
            }
        }
        Ok(BoundTables::Dp {
            stage,
            value,
            envelope_total: envelope.iter().sum::<f64>() - priority_slack,
        })
    }

    /// Lower bound on everything not yet priced for a node whose last
    /// fixed row is period `t` with status `mask` (switch costs into `t`
    /// are added by the caller, exactly).
    fn completion(&self, t: usize, mask: u64) -> f64 {
        match self {
            BoundTables::Dp { stage, value, .. } => {
                stage[t][mask as usize] + value[t][mask as usize]
            }
            BoundTables::Envelope {
                suffix,
                priority_slack,
            } => suffix[t] - priority_slack,
        }
    }

    /// Valid bound at the root, also reported for zero-budget runs.
    fn root_bound(&self, sub: &UcSubproblem, root: &ChainState, _root_mask: u64) -> f64 {
        match self {
            BoundTables::Dp {
                stage,
                value,
                envelope_total,
            } => {
                let n = sub.grid.n_units();
                let mut best = f64::INFINITY;
                for mask in 0u64..(1 << n) {
                    let tail = stage[0][mask as usize] + value[0][mask as usize];
                    if !tail.is_finite() {
                        continue;
                    }
                    let row = mask_to_vec(mask, n);
                    let candidate = exact_switch_cost(sub.grid, root, &row) + tail;
                    if candidate < best {
                        best = candidate;
                    }
                }
                best.max(*envelope_total)
            }
            BoundTables::Envelope {
                suffix,
                priority_slack,
            } => suffix[0] - priority_slack,
        }
    }
}

/// Cheapest-stair startup plus exact shutdown and priority costs for a
/// status change, a valid underestimate of any realized transition.
fn switch_lower_bound(grid: &GridSpec, rho: &[f64], omega: f64, from: usize, to: usize) -> f64 {
    let mut cost = 0.0;
    for (i, unit) in grid.units.iter().enumerate() {
        let was = from >> i & 1 == 1;
        let is = to >> i & 1 == 1;
        if !was && is {
            cost += unit.startup_stairs[0];
            if omega > 0.0 {
                cost += omega * rho[i];
            }
        } else if was && !is {
            cost += unit.shutdown_cost;
            if omega > 0.0 {
                cost -= omega * rho[i];
            }
        }
    }
    cost
}

/// Continuous-relaxation bound for one period: commitment relaxed into the
/// bounds (`0 <= p <= Pmax`), fixed cost amortized per MW, switching costs
/// dropped. Infinite when even full capacity cannot serve the demand.
fn envelope_period_bound(grid: &GridSpec, total_demand: f64) -> f64 {
    let units: Vec<(f64, f64, f64)> = grid
        .units
        .iter()
        .filter(|u| u.in_service && u.p_max > 0.0)
        .map(|u| (u.a / u.p_max + u.b, u.c, u.p_max))
        .collect();
    let cap: f64 = units.iter().map(|(_, _, hi)| hi).sum();
    if total_demand > cap + crate::TAU_FEAS {
        return f64::INFINITY;
    }
    if total_demand <= 0.0 {
        return 0.0;
    }
    // Exact water-fill on the envelope marginals b_eff + 2 c p.
    let mut breakpoints: Vec<f64> = Vec::with_capacity(2 * units.len());
    for &(b, c, hi) in &units {
        breakpoints.push(b);
        breakpoints.push(b + 2.0 * c * hi);
    }
    breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breakpoints.dedup();
    let supply = |lambda: f64| -> f64 {
        units
            .iter()
            .map(|&(b, c, hi)| {
                if c > 0.0 {
                    ((lambda - b) / (2.0 * c)).clamp(0.0, hi)
                } else if lambda >= b {
                    hi
                } else {
                    0.0
                }
            })
            .sum()
    };
    let mut lambda = *breakpoints.last().unwrap();
    let mut prev = breakpoints[0];
    for &bp in &breakpoints {
        if supply(bp) >= total_demand {
            // Interpolate inside (prev, bp) over the free quadratic units.
            let base = supply(prev);
            let slope: f64 = units
                .iter()
                .map(|&(b, c, hi)| {
                    if c > 0.0 && b <= prev && b + 2.0 * c * hi >= bp {
                        1.0 / (2.0 * c)
                    } else {
                        0.0
                    }
                })
                .sum();
            lambda = if slope > 0.0 && supply(bp) > base {
                (prev + (total_demand - base) / slope).min(bp)
            } else {
                bp
            };
            break;
        }
        prev = bp;
    }
    let mut produced = 0.0;
    let mut cost = 0.0;
    for &(b, c, hi) in &units {
        let p = if c > 0.0 {
            ((lambda - b) / (2.0 * c)).clamp(0.0, hi)
        } else if lambda >= b {
            hi
        } else {
            0.0
        };
        produced += p;
        cost += b * p + c * p * p;
    }
    // Trim any linear-unit overshoot at the marginal price.
    if produced > total_demand {
        cost -= lambda * (produced - total_demand);
    }
    cost.max(0.0)
}

fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if (incumbent - bound).abs() <= 1e-12 * (1.0 + incumbent.abs()) {
        0.0
    } else if incumbent.abs() < 1e-12 {
        f64::INFINITY
    } else {
        (incumbent - bound) / incumbent.abs()
    }
}
