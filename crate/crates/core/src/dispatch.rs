//! Single-period economic dispatch: the convex QP that prices a commitment
//! status vector.
//!
//! ```text
//!     minimize    sum_i  a_i + b_i p_i + c_i p_i^2        (committed i)
//!     subject to  sum_i p_i = total demand
//!                 lo_i <= p_i <= hi_i                     (box + ramps)
//!                 Fmin_l <= flow_l(p) <= Fmax_l           (PTDF lines)
//! ```
//!
//! Uncongested problems are solved exactly by marginal-cost water-filling
//! over the box bounds; a primal-dual interior-point step handles the case
//! where line limits bind. Spinning reserve is a feasibility gate on the
//! available output, reported rather than optimized.

use crate::error::{Result, UcError};
use crate::model::{available_output, dc_line_flows, ConstraintKind, GridSpec};

/// One-period dispatch problem for a fixed commitment vector.
#[derive(Debug, Clone)]
pub struct DispatchProblem<'a> {
    pub grid: &'a GridSpec,
    /// Per-bus demand for the period (MW).
    pub period_demand: &'a [f64],
    /// Commitment this period.
    pub v: &'a [bool],
    /// Dispatch in the previous period (MW).
    pub p_prev: &'a [f64],
    /// Commitment in the previous period.
    pub v_prev: &'a [bool],
    /// Next-period commitment when already decided (multi-period pricing);
    /// `None` applies the horizon-edge rule `v(t+1) = v(t)`.
    pub v_next: Option<&'a [bool]>,
    /// Spinning reserve requirement R(t) in MW.
    pub reserve_req: f64,
}

/// Outcome of a dispatch solve.
#[derive(Debug, Clone, PartialEq)]
pub enum DispatchStatus {
    Optimal,
    /// No feasible dispatch; carries the constraint class that failed.
    Infeasible(ConstraintKind),
}

/// Dispatch solution with optimality diagnostics.
#[derive(Debug, Clone)]
pub struct DispatchSolution {
    /// Per-unit output, zero for off units (length N).
    pub p: Vec<f64>,
    /// Per-unit available output for the reserve check (length N).
    pub p_bar: Vec<f64>,
    /// Total production cost of the period ($), including the fixed term
    /// of every committed unit.
    pub production_cost: f64,
    /// Largest stationarity/complementarity/feasibility residual.
    pub kkt_residual: f64,
    pub status: DispatchStatus,
    /// `max(0, demand + reserve - sum p_bar)`; zero when reserve holds.
    pub reserve_shortfall: f64,
}

impl DispatchSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == DispatchStatus::Optimal
    }

    /// True when the solve succeeded and the reserve requirement holds.
    pub fn is_feasible_with_reserve(&self) -> bool {
        self.is_optimal() && self.reserve_shortfall <= 0.0
    }

    fn infeasible(n: usize, kind: ConstraintKind) -> Self {
        DispatchSolution {
            p: vec![0.0; n],
            p_bar: vec![0.0; n],
            production_cost: 0.0,
            kkt_residual: f64::INFINITY,
            status: DispatchStatus::Infeasible(kind),
            reserve_shortfall: f64::INFINITY,
        }
    }
}

/// Per-unit dispatch bounds for the period.
///
/// `lo = p_min` when committed, raised by the ramp-down limit from the
/// previous output; `hi = p_max` capped by ramp-up (or the startup ramp
/// when the unit just started) and by the shutdown ramp when the unit is
/// known to shut down next period. Off units get `lo = hi = 0`. A unit
/// with `lo > hi` signals per-unit infeasibility; the caller decides.
pub fn effective_bounds(problem: &DispatchProblem) -> (Vec<f64>, Vec<f64>) {
    let n = problem.grid.n_units();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for (i, unit) in problem.grid.units.iter().enumerate() {
        if !problem.v[i] || !unit.in_service {
            continue;
        }
        let mut upper = unit
            .p_max
            .min(if problem.v_prev[i] {
                problem.p_prev[i] + unit.ramp_up
            } else {
                unit.startup_ramp
            });
        if let Some(v_next) = problem.v_next {
            if !v_next[i] {
                upper = upper.min(unit.shutdown_ramp);
            }
        }
        let mut lower = unit.p_min;
        if problem.v_prev[i] {
            lower = lower.max(problem.p_prev[i] - unit.ramp_down);
        }
        lo[i] = lower;
        hi[i] = upper;
    }
    (lo, hi)
}

/// Dispatch with caller-supplied bounds instead of ramp-derived ones;
/// used by the relaxation tables of the exact solver. Transition checks
/// are skipped and the reserve fields are not meaningful.
pub(crate) fn solve_ed_with_bounds(
    grid: &GridSpec,
    period_demand: &[f64],
    v: &[bool],
    lo: &[f64],
    hi: &[f64],
) -> Result<DispatchSolution> {
    let n = grid.n_units();
    let tau = crate::TAU_FEAS;
    let demand: f64 = period_demand.iter().sum();
    let committed: Vec<usize> = (0..n).filter(|&i| v[i] && grid.units[i].in_service).collect();
    let lo_sum: f64 = committed.iter().map(|&i| lo[i]).sum();
    let hi_sum: f64 = committed.iter().map(|&i| hi[i]).sum();
    if demand < lo_sum - tau || demand > hi_sum + tau {
        return Ok(DispatchSolution::infeasible(n, ConstraintKind::Balance));
    }
    let mut p = vec![0.0; n];
    let lambda = water_fill(&committed, lo, hi, grid, demand, &mut p);
    let finish = |p: Vec<f64>, residual: f64| {
        let production_cost = committed
            .iter()
            .map(|&i| {
                let u = &grid.units[i];
                u.a + u.b * p[i] + u.c * p[i] * p[i]
            })
            .sum();
        DispatchSolution {
            p_bar: p.clone(),
            p,
            production_cost,
            kkt_residual: residual,
            status: DispatchStatus::Optimal,
            reserve_shortfall: 0.0,
        }
    };
    if line_violation(grid, &p, period_demand) <= tau {
        let _ = lambda;
        return Ok(finish(p, 0.0));
    }
    let stub = DispatchProblem {
        grid,
        period_demand,
        v,
        p_prev: &p,
        v_prev: v,
        v_next: None,
        reserve_req: 0.0,
    };
    match solve_congested_qp(&stub, &committed, lo, hi, demand) {
        Some((p, residual)) => Ok(finish(p, residual)),
        None => Ok(DispatchSolution::infeasible(n, ConstraintKind::LineFlow)),
    }
}

/// Solves the one-period economic dispatch to KKT optimality.
pub fn solve_ed(problem: &DispatchProblem, tau_kkt: f64) -> Result<DispatchSolution> {
    let grid = problem.grid;
    let n = grid.n_units();
    if problem.v.len() != n
        || problem.p_prev.len() != n
        || problem.v_prev.len() != n
        || problem.period_demand.len() != grid.n_buses
        || problem.v_next.is_some_and(|vn| vn.len() != n)
    {
        return Err(UcError::Dimension(
            "dispatch problem dimensions disagree with grid".into(),
        ));
    }
    let tau = crate::TAU_FEAS;
    let demand: f64 = problem.period_demand.iter().sum();

    // A unit that must shut down cannot do so legally from above its
    // shutdown ramp.
    for (i, unit) in grid.units.iter().enumerate() {
        if problem.v_prev[i] && !problem.v[i] && problem.p_prev[i] > unit.shutdown_ramp + tau {
            return Ok(DispatchSolution::infeasible(n, ConstraintKind::RampDown));
        }
        if problem.v[i] && !unit.in_service {
            return Ok(DispatchSolution::infeasible(n, ConstraintKind::GenLimits));
        }
    }

    let (lo, hi) = effective_bounds(problem);
    let committed: Vec<usize> = (0..n)
        .filter(|&i| problem.v[i] && grid.units[i].in_service)
        .collect();
    for &i in &committed {
        if lo[i] > hi[i] + tau {
            return Ok(DispatchSolution::infeasible(n, ConstraintKind::RampDown));
        }
    }

    let lo_sum: f64 = committed.iter().map(|&i| lo[i]).sum();
    let hi_sum: f64 = committed.iter().map(|&i| hi[i]).sum();
    if demand < lo_sum - tau || demand > hi_sum + tau {
        return Ok(DispatchSolution::infeasible(n, ConstraintKind::Balance));
    }

    // Marginal-cost water-filling, exact and line-blind.
    let mut p = vec![0.0; n];
    let lambda = water_fill(&committed, &lo, &hi, grid, demand, &mut p);

    let mut solution = finish_solution(problem, p, &lo, &hi, lambda, demand);
    if line_violation(grid, &solution.p, problem.period_demand) <= tau {
        solution.kkt_residual = solution.kkt_residual.min(tau_kkt);
        return Ok(solution);
    }

    // Line limits bind: solve the full QP by interior point.
    match solve_congested_qp(problem, &committed, &lo, &hi, demand) {
        Some((p, residual)) => {
            let mut solution = finish_solution(problem, p, &lo, &hi, None, demand);
            solution.kkt_residual = residual;
            Ok(solution)
        }
        None => Ok(DispatchSolution::infeasible(n, ConstraintKind::LineFlow)),
    }
}

/// Exact dispatch by equalizing marginal costs over box bounds. Linear-cost
/// units tied at the clearing price are filled lowest index first. Returns
/// the clearing price when one exists.
fn water_fill(
    committed: &[usize],
    lo: &[f64],
    hi: &[f64],
    grid: &GridSpec,
    demand: f64,
    p: &mut [f64],
) -> Option<f64> {
    let lo_sum: f64 = committed.iter().map(|&i| lo[i]).sum();
    let hi_sum: f64 = committed.iter().map(|&i| hi[i]).sum();
    for &i in committed {
        p[i] = lo[i];
    }
    if committed.is_empty() || demand <= lo_sum {
        return None;
    }
    if demand >= hi_sum {
        for &i in committed {
            p[i] = hi[i];
        }
        return None;
    }

    // Output of unit i at price level `lambda`, with linear-cost units
    // resolved to the side named by `above`.
    let at_price = |i: usize, lambda: f64, above: bool| -> f64 {
        let u = &grid.units[i];
        if u.c > 0.0 {
            ((lambda - u.b) / (2.0 * u.c)).clamp(lo[i], hi[i])
        } else if u.b < lambda || (u.b == lambda && above) {
            hi[i]
        } else {
            lo[i]
        }
    };
    let supply = |lambda: f64, above: bool| -> f64 {
        committed.iter().map(|&i| at_price(i, lambda, above)).sum()
    };

    let mut breakpoints: Vec<f64> = Vec::with_capacity(2 * committed.len());
    for &i in committed {
        let u = &grid.units[i];
        breakpoints.push(u.b + 2.0 * u.c * lo[i]);
        breakpoints.push(u.b + 2.0 * u.c * hi[i]);
    }
    breakpoints.sort_by(|x, y| x.partial_cmp(y).unwrap());
    breakpoints.dedup();

    let mut prev = breakpoints[0];
    for &bp in &breakpoints {
        let below = supply(bp, false);
        if below >= demand {
            // Crossed inside the open segment (prev, bp): affine in the
            // free quadratic units there.
            let base = supply(prev, true);
            let slope: f64 = committed
                .iter()
                .map(|&i| {
                    let u = &grid.units[i];
                    let interior = u.c > 0.0
                        && u.b + 2.0 * u.c * lo[i] <= prev
                        && u.b + 2.0 * u.c * hi[i] >= bp;
                    if interior { 1.0 / (2.0 * u.c) } else { 0.0 }
                })
                .sum();
            let lambda = if slope > 0.0 {
                prev + (demand - base) / slope
            } else {
                bp
            };
            for &i in committed {
                p[i] = at_price(i, lambda, false);
            }
            distribute_residual(committed, lo, hi, grid, demand, lambda, p);
            return Some(lambda);
        }
        let above = supply(bp, true);
        if above >= demand {
            // Jump at a linear-cost plateau: fill tied units in index
            // order until the balance closes.
            for &i in committed {
                p[i] = at_price(i, bp, false);
            }
            distribute_residual(committed, lo, hi, grid, demand, bp, p);
            return Some(bp);
        }
        prev = bp;
    }
    // Numerically at the top of the supply curve.
    for &i in committed {
        p[i] = hi[i];
    }
    Some(*breakpoints.last().unwrap())
}

/// Closes the remaining balance residual at the clearing price. Units
/// whose marginal cost sits at the price absorb it lowest index first (the
/// tie-break for linear-cost units sharing the price); any float dust left
/// after that goes to whoever has headroom.
fn distribute_residual(
    committed: &[usize],
    lo: &[f64],
    hi: &[f64],
    grid: &GridSpec,
    demand: f64,
    lambda: f64,
    p: &mut [f64],
) {
    let mut residual: f64 = demand - committed.iter().map(|&i| p[i]).sum::<f64>();
    for &i in committed {
        if residual == 0.0 {
            return;
        }
        let u = &grid.units[i];
        let marginal = u.b + 2.0 * u.c * p[i];
        if (marginal - lambda).abs() > 1e-9 * (1.0 + lambda.abs()) {
            continue;
        }
        let room = if residual > 0.0 { hi[i] - p[i] } else { lo[i] - p[i] };
        let step = residual.clamp(room.min(0.0), room.max(0.0));
        p[i] += step;
        residual -= step;
    }
    if residual != 0.0 && residual.abs() <= 1e-7 * (1.0 + demand.abs()) {
        for &i in committed {
            let room = if residual > 0.0 { hi[i] - p[i] } else { lo[i] - p[i] };
            let step = residual.clamp(room.min(0.0), room.max(0.0));
            p[i] += step;
            residual -= step;
            if residual == 0.0 {
                break;
            }
        }
    }
}

fn finish_solution(
    problem: &DispatchProblem,
    p: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    lambda: Option<f64>,
    demand: f64,
) -> DispatchSolution {
    let grid = problem.grid;
    let n = grid.n_units();
    let mut production_cost = 0.0;
    let mut p_bar = vec![0.0; n];
    for (i, unit) in grid.units.iter().enumerate() {
        if problem.v[i] && unit.in_service {
            production_cost += unit.a + unit.b * p[i] + unit.c * p[i] * p[i];
            p_bar[i] = available_output(unit, true, problem.v_prev[i], problem.p_prev[i]);
        }
    }
    let available: f64 = p_bar.iter().sum();
    let required = demand + problem.reserve_req;
    let reserve_shortfall = (required - available).max(0.0);

    // Stationarity/complementarity residual for the uncongested solution.
    let mut residual: f64 = (p.iter().sum::<f64>() - demand).abs();
    if let Some(lambda) = lambda {
        for (i, unit) in grid.units.iter().enumerate() {
            if !problem.v[i] || !unit.in_service {
                continue;
            }
            let marginal = unit.b + 2.0 * unit.c * p[i];
            if p[i] <= lo[i] + 1e-9 {
                residual = residual.max((lambda - marginal).max(0.0));
            } else if p[i] >= hi[i] - 1e-9 {
                residual = residual.max((marginal - lambda).max(0.0));
            } else {
                residual = residual.max((marginal - lambda).abs());
            }
        }
    }

    DispatchSolution {
        p,
        p_bar,
        production_cost,
        kkt_residual: residual,
        status: DispatchStatus::Optimal,
        reserve_shortfall,
    }
}

fn line_violation(grid: &GridSpec, p: &[f64], demand: &[f64]) -> f64 {
    if grid.lines.is_empty() {
        return 0.0;
    }
    let flows = dc_line_flows(grid, p, demand);
    grid.lines
        .iter()
        .zip(&flows)
        .map(|(line, &f)| (f - line.flow_max).max(line.flow_min - f).max(0.0))
        .fold(0.0, f64::max)
}

/// Primal-dual interior-point solve of the dispatch QP with line limits;
/// returns the dispatch and its KKT residual, or `None` when the iteration
/// fails to reach primal feasibility (line limits unsatisfiable).
fn solve_congested_qp(
    problem: &DispatchProblem,
    committed: &[usize],
    lo: &[f64],
    hi: &[f64],
    demand: f64,
) -> Option<(Vec<f64>, f64)> {
    use nalgebra::{DMatrix, DVector};

    let grid = problem.grid;
    let nc = committed.len();
    if nc == 0 {
        return None;
    }
    let n_lines = grid.lines.len();
    let m = 2 * nc + 2 * n_lines;

    // Base flow from loads alone (off units inject nothing).
    let base: Vec<f64> = (0..n_lines)
        .map(|l| {
            -problem
                .period_demand
                .iter()
                .enumerate()
                .map(|(j, &d)| d * grid.ptdf_load[j][l])
                .sum::<f64>()
        })
        .collect();

    // Inequalities G x <= h over the committed outputs.
    let mut g = DMatrix::zeros(m, nc);
    let mut h = DVector::zeros(m);
    for (k, &i) in committed.iter().enumerate() {
        g[(k, k)] = 1.0;
        h[k] = hi[i];
        g[(nc + k, k)] = -1.0;
        h[nc + k] = -lo[i];
    }
    for l in 0..n_lines {
        for (k, &i) in committed.iter().enumerate() {
            g[(2 * nc + l, k)] = grid.ptdf_unit[i][l];
            g[(2 * nc + n_lines + l, k)] = -grid.ptdf_unit[i][l];
        }
        h[2 * nc + l] = grid.lines[l].flow_max - base[l];
        h[2 * nc + n_lines + l] = -(grid.lines[l].flow_min - base[l]);
    }

    let q_diag: Vec<f64> = committed.iter().map(|&i| 2.0 * grid.units[i].c).collect();
    let q_lin: Vec<f64> = committed.iter().map(|&i| grid.units[i].b).collect();
    let scale = 1.0 + demand.abs() + q_lin.iter().fold(0.0f64, |a, &b| a.max(b.abs()));

    // Strictly interior start.
    let mut x = DVector::from_iterator(
        nc,
        committed.iter().map(|&i| 0.5 * (lo[i] + hi[i])),
    );
    let mut y = 0.0f64;
    let mut z = DVector::from_element(m, 1.0);
    let mut s = DVector::from_element(m, 1.0);
    for k in 0..m {
        let slack = h[k] - (g.row(k) * &x)[0];
        s[k] = slack.max(1.0);
    }

    let max_iter = 120;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..max_iter {
        // Residuals.
        let r_dual = {
            let mut r = DVector::from_iterator(
                nc,
                (0..nc).map(|k| q_diag[k] * x[k] + q_lin[k] + y),
            );
            r += g.transpose() * &z;
            r
        };
        let r_eq = x.sum() - demand;
        let r_ineq = &g * &x + &s - &h;
        let mu = z.dot(&s) / m as f64;

        let kkt = r_dual.amax().max(r_eq.abs()).max(r_ineq.amax()).max(mu);
        let p_full = expand(&x, committed, problem.grid.n_units());
        if kkt / scale < 1e-11 {
            return Some((p_full, kkt));
        }
        if r_ineq.amax() / scale < 1e-9 && r_eq.abs() / scale < 1e-9 {
            // Track the best primal-feasible iterate in case mu stalls.
            let record = kkt;
            if best.as_ref().is_none_or(|(_, b)| record < *b) {
                best = Some((p_full, record));
            }
        }

        // Newton direction for the sigma-centered system, slacks and
        // inequality duals eliminated.
        let sigma = 0.2;
        let w: Vec<f64> = (0..m).map(|k| z[k] / s[k]).collect();
        let rc = DVector::from_iterator(m, (0..m).map(|k| sigma * mu - z[k] * s[k]));

        let mut kkt_mat = DMatrix::zeros(nc + 1, nc + 1);
        for k in 0..nc {
            kkt_mat[(k, k)] = q_diag[k];
            kkt_mat[(k, nc)] = 1.0;
            kkt_mat[(nc, k)] = 1.0;
        }
        for row in 0..m {
            for a in 0..nc {
                if g[(row, a)] == 0.0 {
                    continue;
                }
                for b in 0..nc {
                    kkt_mat[(a, b)] += g[(row, a)] * w[row] * g[(row, b)];
                }
            }
        }
        let mut rhs = DVector::zeros(nc + 1);
        for a in 0..nc {
            let mut acc = -r_dual[a];
            for row in 0..m {
                acc -= g[(row, a)] * (rc[row] / s[row] + w[row] * r_ineq[row]);
            }
            rhs[a] = acc;
        }
        rhs[nc] = -r_eq;

        let delta = kkt_mat.lu().solve(&rhs)?;
        let dx = delta.rows(0, nc).into_owned();
        let dy = delta[nc];
        let ds = -&r_ineq - &g * &dx;
        let dz = DVector::from_iterator(m, (0..m).map(|k| (rc[k] - z[k] * ds[k]) / s[k]));

        // Fraction-to-boundary step.
        let mut alpha = 1.0f64;
        for k in 0..m {
            if ds[k] < 0.0 {
                alpha = alpha.min(-s[k] / ds[k]);
            }
            if dz[k] < 0.0 {
                alpha = alpha.min(-z[k] / dz[k]);
            }
        }
        alpha = (0.99 * alpha).min(1.0);

        x += alpha * &dx;
        y += alpha * dy;
        s += alpha * &ds;
        z += alpha * &dz;
    }
    best
}

fn expand(x: &nalgebra::DVector<f64>, committed: &[usize], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    for (k, &i) in committed.iter().enumerate() {
        p[i] = x[k];
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LineSpec, UnitSpec};
    use crate::TAU_KKT;

    fn unit(id: usize, bus: usize, b: f64, c: f64, p_max: f64) -> UnitSpec {
        UnitSpec {
            id,
            bus,
            p_max,
            p_min: 0.0,
            a: 0.0,
            b,
            c,
            startup_stairs: vec![100.0],
            shutdown_cost: 10.0,
            ramp_up: p_max,
            ramp_down: p_max,
            startup_ramp: p_max,
            shutdown_ramp: p_max,
            min_up: 1,
            min_down: 1,
            init_status: true,
            init_duration: 10,
            init_power: None,
            in_service: true,
        }
    }

    fn solve(grid: &GridSpec, demand: Vec<f64>, v: Vec<bool>) -> DispatchSolution {
        let n = grid.n_units();
        let p_prev = vec![0.0; n];
        let v_prev = v.clone();
        let problem = DispatchProblem {
            grid,
            period_demand: &demand,
            v: &v,
            p_prev: &p_prev,
            v_prev: &v_prev,
            v_next: None,
            reserve_req: 0.0,
        };
        solve_ed(&problem, TAU_KKT).unwrap()
    }

    #[test]
    fn equal_marginal_cost_split() {
        // 10 + 0.02 p1 = 10 + 0.04 p2 with p1 + p2 = 150 gives (100, 50).
        let grid = GridSpec::new(
            1,
            vec![unit(0, 0, 10.0, 0.01, 500.0), unit(1, 0, 10.0, 0.02, 500.0)],
            vec![],
            0,
            0.0,
        )
        .unwrap();
        let sol = solve(&grid, vec![150.0], vec![true, true]);
        assert!(sol.is_optimal());
        assert!((sol.p[0] - 100.0).abs() < 1e-9, "p = {:?}", sol.p);
        assert!((sol.p[1] - 50.0).abs() < 1e-9);
        assert!(sol.kkt_residual <= TAU_KKT);
    }

    #[test]
    fn single_unit_takes_demand() {
        let grid = GridSpec::new(1, vec![unit(0, 0, 12.0, 0.01, 300.0)], vec![], 0, 0.0).unwrap();
        let sol = solve(&grid, vec![220.0], vec![true]);
        assert!(sol.is_optimal());
        assert!((sol.p[0] - 220.0).abs() < 1e-9);
    }

    #[test]
    fn effective_bounds_examples() {
        let mut ramp_unit = unit(0, 0, 10.0, 0.01, 200.0);
        ramp_unit.ramp_up = 30.0;
        let grid = GridSpec::new(1, vec![ramp_unit], vec![], 0, 0.0).unwrap();
        let demand = [130.0];
        let problem = DispatchProblem {
            grid: &grid,
            period_demand: &demand,
            v: &[true],
            p_prev: &[100.0],
            v_prev: &[true],
            v_next: None,
            reserve_req: 0.0,
        };
        let (_, hi) = effective_bounds(&problem);
        assert_eq!(hi[0], 130.0);

        let mut su_unit = unit(0, 0, 10.0, 0.01, 200.0);
        su_unit.p_min = 50.0;
        su_unit.startup_ramp = 80.0;
        let grid = GridSpec::new(1, vec![su_unit], vec![], 0, 0.0).unwrap();
        let problem = DispatchProblem {
            grid: &grid,
            period_demand: &demand,
            v: &[true],
            p_prev: &[0.0],
            v_prev: &[false],
            v_next: None,
            reserve_req: 0.0,
        };
        let (lo, hi) = effective_bounds(&problem);
        assert_eq!((lo[0], hi[0]), (50.0, 80.0));

        let problem_off = DispatchProblem {
            v: &[false],
            ..problem
        };
        let (lo, hi) = effective_bounds(&problem_off);
        assert_eq!((lo[0], hi[0]), (0.0, 0.0));
    }

    #[test]
    fn infeasible_when_capacity_short() {
        let grid = GridSpec::new(1, vec![unit(0, 0, 10.0, 0.01, 100.0)], vec![], 0, 0.0).unwrap();
        let sol = solve(&grid, vec![150.0], vec![true]);
        assert_eq!(sol.status, DispatchStatus::Infeasible(ConstraintKind::Balance));
    }

    #[test]
    fn infeasible_shutdown_above_ramp() {
        let mut u = unit(0, 0, 10.0, 0.01, 200.0);
        u.shutdown_ramp = 80.0;
        let cheap = unit(1, 0, 8.0, 0.005, 300.0);
        let grid = GridSpec::new(1, vec![u, cheap], vec![], 0, 0.0).unwrap();
        let demand = [100.0];
        let problem = DispatchProblem {
            grid: &grid,
            period_demand: &demand,
            v: &[false, true],
            p_prev: &[150.0, 0.0],
            v_prev: &[true, true],
            v_next: None,
            reserve_req: 0.0,
        };
        let sol = solve_ed(&problem, TAU_KKT).unwrap();
        assert_eq!(sol.status, DispatchStatus::Infeasible(ConstraintKind::RampDown));
    }

    #[test]
    fn linear_cost_tie_fills_lower_index_first() {
        let grid = GridSpec::new(
            1,
            vec![unit(0, 0, 10.0, 0.0, 100.0), unit(1, 0, 10.0, 0.0, 100.0)],
            vec![],
            0,
            0.0,
        )
        .unwrap();
        let sol = solve(&grid, vec![120.0], vec![true, true]);
        assert!(sol.is_optimal());
        assert!((sol.p[0] - 100.0).abs() < 1e-9, "p = {:?}", sol.p);
        assert!((sol.p[1] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn congested_line_binds_at_limit_with_higher_cost() {
        // Cheap unit behind a limited line; the expensive local unit must
        // pick up the remainder.
        let line = LineSpec {
            from: 0,
            to: 1,
            reactance: 0.1,
            flow_min: -60.0,
            flow_max: 60.0,
        };
        let grid = GridSpec::new(
            2,
            vec![unit(0, 0, 5.0, 0.01, 300.0), unit(1, 1, 20.0, 0.01, 300.0)],
            vec![line],
            0,
            0.0,
        )
        .unwrap();
        // All demand at bus 1: the cheap unit's deliveries cross the line.
        let sol = solve(&grid, vec![0.0, 150.0], vec![true, true]);
        assert!(sol.is_optimal(), "{:?}", sol.status);
        let flows = dc_line_flows(&grid, &sol.p, &[0.0, 150.0]);
        assert!(flows[0] <= 60.0 + 1e-6, "flow {}", flows[0]);
        assert!((flows[0] - 60.0).abs() < 1e-5, "line should bind: {}", flows[0]);
        assert!((sol.p[0] - 60.0).abs() < 1e-5);
        assert!((sol.p[1] - 90.0).abs() < 1e-5);

        // Uncongested cost is strictly lower.
        let mut open = grid.clone();
        open.lines[0].flow_max = 1000.0;
        open.lines[0].flow_min = -1000.0;
        let unconstrained = solve(&open, vec![0.0, 150.0], vec![true, true]);
        assert!(unconstrained.production_cost < sol.production_cost - 1.0);
    }

    #[test]
    fn infeasible_line_limits_detected() {
        let line = LineSpec {
            from: 0,
            to: 1,
            reactance: 0.1,
            flow_min: -20.0,
            flow_max: 20.0,
        };
        // Only a remote unit serves bus-1 demand of 100: impossible at 20 MW.
        let grid = GridSpec::new(2, vec![unit(0, 0, 5.0, 0.01, 300.0)], vec![line], 0, 0.0)
            .unwrap();
        let sol = solve(&grid, vec![0.0, 100.0], vec![true]);
        assert_eq!(sol.status, DispatchStatus::Infeasible(ConstraintKind::LineFlow));
    }

    #[test]
    fn cost_monotone_in_demand() {
        let grid = GridSpec::new(
            1,
            vec![unit(0, 0, 10.0, 0.01, 300.0), unit(1, 0, 14.0, 0.02, 300.0)],
            vec![],
            0,
            0.0,
        )
        .unwrap();
        let mut prev = -1.0;
        for d in [50.0, 120.0, 260.0, 410.0, 550.0] {
            let sol = solve(&grid, vec![d], vec![true, true]);
            assert!(sol.is_optimal());
            assert!(sol.production_cost >= prev);
            prev = sol.production_cost;
        }
    }

    #[test]
    fn reserve_shortfall_reported_not_failed() {
        let grid = GridSpec::new(1, vec![unit(0, 0, 10.0, 0.01, 100.0)], vec![], 0, 0.0).unwrap();
        let demand = [95.0];
        let problem = DispatchProblem {
            grid: &grid,
            period_demand: &demand,
            v: &[true],
            p_prev: &[95.0],
            v_prev: &[true],
            v_next: None,
            reserve_req: 20.0,
        };
        let sol = solve_ed(&problem, TAU_KKT).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.reserve_shortfall - 15.0).abs() < 1e-9);
        assert!(!sol.is_feasible_with_reserve());
    }
}
