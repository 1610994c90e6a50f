//! Cost functions and the on/off duration counter.
//!
//! Production cost is quadratic in output; startup cost is a staircase
//! indexed by how long the unit has been offline; shutdown cost is a flat
//! fee per shutdown event.

use crate::error::{Result, UcError};
use crate::model::{GridSpec, Schedule, UnitSpec};
use crate::TAU_FEAS;

/// Quadratic production cost `a*v + b*p + c*p^2` for one unit-period.
///
/// Requires `p = 0` when off and `p` within the generation box when on
/// (to within the feasibility tolerance).
pub fn production_cost(unit: &UnitSpec, v: bool, p: f64) -> Result<f64> {
    if !v {
        if p.abs() > TAU_FEAS {
            return Err(UcError::InvalidDispatch {
                unit: unit.id,
                reason: format!("off unit dispatched at {p} MW"),
            });
        }
        return Ok(0.0);
    }
    if p < unit.p_min - TAU_FEAS || p > unit.p_max + TAU_FEAS {
        return Err(UcError::InvalidDispatch {
            unit: unit.id,
            reason: format!(
                "output {p} MW outside [{}, {}]",
                unit.p_min, unit.p_max
            ),
        });
    }
    Ok(unit.a + unit.b * p + unit.c * p * p)
}

/// Staircase startup cost for a transition, given the counter `u_prev`
/// (periods spent in the previous status). Returns the stair at
/// `min(stair_count, u_prev)` (1-based) on a 0 -> 1 transition, else 0.
pub fn startup_cost_from_counter(unit: &UnitSpec, u_prev: u32, v_prev: bool, v_next: bool) -> f64 {
    debug_assert!(u_prev >= 1, "counters start at 1");
    if v_next && !v_prev {
        let idx = (u_prev as usize).min(unit.stair_count());
        unit.startup_stairs[idx - 1]
    } else {
        0.0
    }
}

/// Flat shutdown cost on a 1 -> 0 transition, else 0.
pub fn shutdown_cost(unit: &UnitSpec, v_prev: bool, v_next: bool) -> f64 {
    if v_prev && !v_next {
        unit.shutdown_cost
    } else {
        0.0
    }
}

/// Average fuel price per MW at capacity: `(a + b*Pmax + c*Pmax^2) / Pmax`.
///
/// Used to rank units when generating candidate actions.
pub fn average_fuel_price(unit: &UnitSpec) -> Result<f64> {
    if unit.p_max <= 0.0 {
        return Err(UcError::InvalidUnit {
            unit: unit.id,
            reason: "average fuel price undefined for p_max = 0".into(),
        });
    }
    Ok((unit.a + unit.b * unit.p_max + unit.c * unit.p_max * unit.p_max) / unit.p_max)
}

/// Advances the on/off duration counter across one transition: increments
/// while the status holds, resets to 1 on a flip.
pub fn update_counter(u_prev: u32, v_prev: bool, v_next: bool) -> u32 {
    debug_assert!(u_prev >= 1, "counters start at 1");
    if v_next == v_prev {
        u_prev + 1
    } else {
        1
    }
}

/// Total cost of a schedule: production plus startup plus shutdown, with
/// startup stairs indexed by counters propagated from each unit's initial
/// duration. Also returns the per-period breakdown.
pub fn schedule_cost_breakdown(
    grid: &GridSpec,
    sched: &Schedule,
) -> Result<Vec<crate::model::PeriodCost>> {
    let n = grid.n_units();
    let horizon = sched.horizon();
    if sched.n_units() != n || sched.p.len() != horizon {
        return Err(UcError::Dimension(format!(
            "schedule is {}x{}, grid has {} units",
            horizon,
            sched.n_units(),
            n
        )));
    }
    let mut v_prev: Vec<bool> = grid.units.iter().map(|u| u.init_status).collect();
    let mut u_prev: Vec<u32> = grid.units.iter().map(|u| u.init_duration).collect();
    let mut breakdown = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut period = crate::model::PeriodCost::default();
        for (i, unit) in grid.units.iter().enumerate() {
            let v = sched.v[t][i];
            period.production += production_cost(unit, v, sched.p[t][i])?;
            period.startup += startup_cost_from_counter(unit, u_prev[i], v_prev[i], v);
            period.shutdown += shutdown_cost(unit, v_prev[i], v);
            u_prev[i] = update_counter(u_prev[i], v_prev[i], v);
            v_prev[i] = v;
        }
        breakdown.push(period);
    }
    Ok(breakdown)
}

/// Total cost of a schedule in dollars.
pub fn schedule_cost(grid: &GridSpec, sched: &Schedule) -> Result<f64> {
    Ok(schedule_cost_breakdown(grid, sched)?
        .iter()
        .map(|c| c.total())
        .sum())
}
