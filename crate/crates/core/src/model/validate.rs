//! Schedule validation against the full constraint set: balance, reserve,
//! generation box, ramping, minimum up/down times, and line flows.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UcError};
use crate::model::{dc_line_flows, GridSpec, LoadScenario, Schedule, UnitSpec};

/// Constraint families a schedule can violate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Balance,
    Reserve,
    GenLimits,
    RampUp,
    RampDown,
    MinUp,
    MinDown,
    LineFlow,
}

/// One violated constraint instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ConstraintKind,
    /// Period of the violation, 1-based.
    pub period: usize,
    /// Unit or line index when the constraint is per-unit or per-line.
    pub index: Option<usize>,
    /// Size of the violation in native units (MW, or periods for
    /// minimum up/down time shortfalls).
    pub magnitude: f64,
}

/// Every violated constraint instance of a schedule; empty means feasible
/// at the checked tolerance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    fn push(&mut self, kind: ConstraintKind, period: usize, index: Option<usize>, magnitude: f64) {
        self.violations.push(Violation {
            kind,
            period,
            index,
            magnitude,
        });
    }
}

/// Maximum output a committed unit can actually deliver this period, given
/// the previous period's status and dispatch: capacity capped by the
/// ramp-up limit (or the startup ramp when the unit just started).
pub fn available_output(unit: &UnitSpec, v: bool, v_prev: bool, p_prev: f64) -> f64 {
    if !v {
        return 0.0;
    }
    let ramp_cap = if v_prev {
        p_prev + unit.ramp_up
    } else {
        unit.startup_ramp
    };
    unit.p_max.min(ramp_cap)
}

/// Checks a schedule against all operational constraints and reports every
/// violated instance with its magnitude.
pub fn validate_schedule(
    grid: &GridSpec,
    loads: &LoadScenario,
    sched: &Schedule,
    tau_feas: f64,
) -> Result<ViolationReport> {
    let n = grid.n_units();
    let horizon = sched.horizon();
    if horizon == 0 || sched.n_units() != n || sched.p.len() != horizon {
        return Err(UcError::Dimension(format!(
            "schedule is {}x{} for a grid with {n} units",
            horizon,
            sched.n_units()
        )));
    }
    if loads.horizon != horizon || loads.n_buses != grid.n_buses {
        return Err(UcError::Dimension(format!(
            "loads are {}x{}, schedule needs {horizon}x{}",
            loads.horizon, loads.n_buses, grid.n_buses
        )));
    }

    let mut report = ViolationReport::default();
    let mut v_prev: Vec<bool> = grid.units.iter().map(|u| u.init_status).collect();
    let mut u_prev: Vec<u32> = grid.units.iter().map(|u| u.init_duration).collect();
    let mut p_prev: Vec<f64> = grid.units.iter().map(|u| u.initial_power()).collect();

    for t in 0..horizon {
        let period = t + 1;
        let demand = loads.total(t);
        let mut total_p = 0.0;
        let mut total_available = 0.0;

        for (i, unit) in grid.units.iter().enumerate() {
            let v = sched.v[t][i];
            let p = sched.p[t][i];
            total_p += p;

            if v && !unit.in_service {
                report.push(ConstraintKind::GenLimits, period, Some(i), p.max(unit.p_min));
            }

            // Generation box.
            if v {
                if p < unit.p_min - tau_feas {
                    report.push(ConstraintKind::GenLimits, period, Some(i), unit.p_min - p);
                } else if p > unit.p_max + tau_feas {
                    report.push(ConstraintKind::GenLimits, period, Some(i), p - unit.p_max);
                }
            } else if p.abs() > tau_feas {
                report.push(ConstraintKind::GenLimits, period, Some(i), p.abs());
            }

            // Ramping, including startup/shutdown caps.
            match (v_prev[i], v) {
                (true, true) => {
                    if p - p_prev[i] > unit.ramp_up + tau_feas {
                        report.push(
                            ConstraintKind::RampUp,
                            period,
                            Some(i),
                            p - p_prev[i] - unit.ramp_up,
                        );
                    }
                    if p_prev[i] - p > unit.ramp_down + tau_feas {
                        report.push(
                            ConstraintKind::RampDown,
                            period,
                            Some(i),
                            p_prev[i] - p - unit.ramp_down,
                        );
                    }
                }
                (false, true) => {
                    if p > unit.startup_ramp + tau_feas {
                        report.push(
                            ConstraintKind::RampUp,
                            period,
                            Some(i),
                            p - unit.startup_ramp,
                        );
                    }
                }
                (true, false) => {
                    if p_prev[i] > unit.shutdown_ramp + tau_feas {
                        report.push(
                            ConstraintKind::RampDown,
                            period,
                            Some(i),
                            p_prev[i] - unit.shutdown_ramp,
                        );
                    }
                }
                (false, false) => {}
            }

            // Minimum up/down time: a flip requires the finished run
            // (counted through the initial duration) to meet the limit.
            if v != v_prev[i] {
                let run = u_prev[i];
                if v_prev[i] && run < unit.min_up {
                    report.push(
                        ConstraintKind::MinUp,
                        period,
                        Some(i),
                        f64::from(unit.min_up - run),
                    );
                }
                if !v_prev[i] && run < unit.min_down {
                    report.push(
                        ConstraintKind::MinDown,
                        period,
                        Some(i),
                        f64::from(unit.min_down - run),
                    );
                }
            }

            total_available += available_output(unit, v, v_prev[i], p_prev[i]);
        }

        // System power balance.
        if (total_p - demand).abs() > tau_feas {
            report.push(ConstraintKind::Balance, period, None, (total_p - demand).abs());
        }

        // Spinning reserve on available output.
        let required = demand + grid.reserve_requirement(demand);
        if total_available < required - tau_feas {
            report.push(ConstraintKind::Reserve, period, None, required - total_available);
        }

        // Line limits.
        let flows = dc_line_flows(grid, &sched.p[t], &loads.demand[t]);
        for (l, line) in grid.lines.iter().enumerate() {
            if flows[l] > line.flow_max + tau_feas {
                report.push(ConstraintKind::LineFlow, period, Some(l), flows[l] - line.flow_max);
            } else if flows[l] < line.flow_min - tau_feas {
                report.push(ConstraintKind::LineFlow, period, Some(l), line.flow_min - flows[l]);
            }
        }

        for i in 0..n {
            u_prev[i] = super::update_counter(u_prev[i], v_prev[i], sched.v[t][i]);
            v_prev[i] = sched.v[t][i];
            p_prev[i] = sched.p[t][i];
        }
    }

    Ok(report)
}
