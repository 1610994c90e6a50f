//! Domain types and the shared vocabulary of every other module: generator
//! and grid specifications, load scenarios, schedules, cost functions,
//! status counters, PTDF construction, and constraint validation.

mod cost;
mod ptdf;
mod validate;

pub use cost::{
    average_fuel_price, production_cost, schedule_cost, schedule_cost_breakdown, shutdown_cost,
    startup_cost_from_counter, update_counter,
};
pub use ptdf::{compute_ptdf, dc_line_flows};
pub use validate::{
    available_output, validate_schedule, ConstraintKind, Violation, ViolationReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{Result, UcError};

/// All physical and cost parameters of one generating unit.
///
/// Power quantities are in MW, costs in dollars, durations in whole
/// scheduling periods (hours at the default resolution).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSpec {
    /// Display identifier, as given in the instance file.
    pub id: usize,
    /// Bus the unit injects at (0-based internal index).
    pub bus: usize,
    /// Capacity (maximum output when committed).
    pub p_max: f64,
    /// Minimum stable output when committed.
    pub p_min: f64,
    /// Fixed production cost coefficient ($ per committed period).
    pub a: f64,
    /// Linear production cost coefficient ($/MWh).
    pub b: f64,
    /// Quadratic production cost coefficient ($/MW^2 h).
    pub c: f64,
    /// Staircase startup costs, one entry per consecutive off period,
    /// non-decreasing; the last entry is the cold-start cost.
    pub startup_stairs: Vec<f64>,
    /// Fixed shutdown cost ($).
    pub shutdown_cost: f64,
    /// Ramp-up limit between consecutive committed periods (MW).
    pub ramp_up: f64,
    /// Ramp-down limit between consecutive committed periods (MW).
    pub ramp_down: f64,
    /// Output cap in the startup period (MW).
    pub startup_ramp: f64,
    /// Output cap in the period preceding a shutdown (MW).
    pub shutdown_ramp: f64,
    /// Minimum consecutive on periods after a startup.
    pub min_up: u32,
    /// Minimum consecutive off periods after a shutdown.
    pub min_down: u32,
    /// Commitment status immediately before the horizon.
    pub init_status: bool,
    /// Periods the unit has held `init_status` before the horizon (>= 1).
    pub init_duration: u32,
    /// Output immediately before the horizon; defaults to
    /// `p_min * init_status` when absent.
    #[serde(default)]
    pub init_power: Option<f64>,
    /// False when the unit is removed by an outage scenario.
    #[serde(default = "default_true")]
    pub in_service: bool,
}

fn default_true() -> bool {
    true
}

impl UnitSpec {
    /// Checks the declared parameter invariants.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(UcError::InvalidUnit {
                unit: self.id,
                reason: reason.to_string(),
            })
        };
        if self.p_min > self.p_max {
            return fail("p_min must not exceed p_max");
        }
        if self.p_min < 0.0 {
            return fail("p_min must be non-negative");
        }
        if self.a < 0.0 || self.b < 0.0 || self.c < 0.0 {
            return fail("cost coefficients must be non-negative");
        }
        if self.startup_stairs.is_empty() {
            return fail("startup_stairs must have at least one entry");
        }
        if self.startup_stairs.windows(2).any(|w| w[1] < w[0]) {
            return fail("startup_stairs must be non-decreasing");
        }
        if self.startup_stairs.iter().any(|&s| s < 0.0) || self.shutdown_cost < 0.0 {
            return fail("switching costs must be non-negative");
        }
        if self.ramp_up < 0.0 || self.ramp_down < 0.0 {
            return fail("ramp limits must be non-negative");
        }
        if self.startup_ramp < self.p_min || self.shutdown_ramp < self.p_min {
            return fail("startup/shutdown ramps must be at least p_min");
        }
        if self.min_up < 1 || self.min_down < 1 {
            return fail("min_up and min_down must be at least 1");
        }
        if self.init_duration < 1 {
            return fail("init_duration must be at least 1");
        }
        if let Some(p0) = self.init_power {
            if self.init_status && !(p0 >= 0.0 && p0 <= self.p_max) {
                return fail("init_power outside [0, p_max]");
            }
            if !self.init_status && p0 != 0.0 {
                return fail("init_power must be 0 for an initially off unit");
            }
        }
        Ok(())
    }

    /// Number of startup cost stairs.
    pub fn stair_count(&self) -> usize {
        self.startup_stairs.len()
    }

    /// Output immediately before the horizon (explicit or the
    /// `p_min * init_status` default).
    pub fn initial_power(&self) -> f64 {
        self.init_power
            .unwrap_or(if self.init_status { self.p_min } else { 0.0 })
    }

    /// Periods the unit must stay on at the start of a horizon.
    pub fn initial_must_on(&self) -> u32 {
        if self.init_status && self.in_service {
            self.min_up.saturating_sub(self.init_duration)
        } else {
            0
        }
    }

    /// Periods the unit must stay off at the start of a horizon.
    pub fn initial_must_off(&self) -> u32 {
        if !self.init_status {
            self.min_down.saturating_sub(self.init_duration)
        } else {
            0
        }
    }
}

/// One transmission line of the DC network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    /// Sending bus (0-based); positive flow is from -> to.
    pub from: usize,
    /// Receiving bus (0-based).
    pub to: usize,
    /// Series reactance, p.u. (> 0).
    pub reactance: f64,
    /// Lower flow limit (MW, <= 0).
    pub flow_min: f64,
    /// Upper flow limit (MW, >= 0).
    pub flow_max: f64,
}

/// Buses, lines, units, PTDF factors, and the reserve policy of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of buses M.
    pub n_buses: usize,
    /// Generating units (N entries).
    pub units: Vec<UnitSpec>,
    /// Transmission lines (L entries).
    pub lines: Vec<LineSpec>,
    /// Reference bus whose PTDF row is zero (0-based).
    pub slack_bus: usize,
    /// Unit-to-line factors, N x L: `ptdf_unit[i][l]` is the flow on line
    /// l caused by 1 MW injected at unit i's bus.
    pub ptdf_unit: Vec<Vec<f64>>,
    /// Bus-to-line factors, M x L, used for the load side.
    pub ptdf_load: Vec<Vec<f64>>,
    /// Spinning reserve requirement as a fraction of total demand.
    pub reserve_fraction: f64,
}

impl GridSpec {
    /// Builds a grid and fills the PTDF matrices from the line data.
    pub fn new(
        n_buses: usize,
        units: Vec<UnitSpec>,
        lines: Vec<LineSpec>,
        slack_bus: usize,
        reserve_fraction: f64,
    ) -> Result<Self> {
        let mut grid = GridSpec {
            n_buses,
            units,
            lines,
            slack_bus,
            ptdf_unit: Vec::new(),
            ptdf_load: Vec::new(),
            reserve_fraction,
        };
        grid.validate_structure()?;
        let (ptdf_unit, ptdf_load) = compute_ptdf(&grid)?;
        grid.ptdf_unit = ptdf_unit;
        grid.ptdf_load = ptdf_load;
        Ok(grid)
    }

    fn validate_structure(&self) -> Result<()> {
        if self.slack_bus >= self.n_buses {
            return Err(UcError::Dimension(format!(
                "slack bus {} out of range for {} buses",
                self.slack_bus, self.n_buses
            )));
        }
        for unit in &self.units {
            unit.validate()?;
            if unit.bus >= self.n_buses {
                return Err(UcError::InvalidUnit {
                    unit: unit.id,
                    reason: format!("bus {} out of range", unit.bus),
                });
            }
        }
        for (l, line) in self.lines.iter().enumerate() {
            if line.from >= self.n_buses || line.to >= self.n_buses || line.from == line.to {
                return Err(UcError::Dimension(format!("line {l} endpoints invalid")));
            }
            if line.reactance <= 0.0 {
                return Err(UcError::Dimension(format!(
                    "line {l} reactance must be positive"
                )));
            }
            if line.flow_min > 0.0 || line.flow_max < 0.0 {
                return Err(UcError::Dimension(format!(
                    "line {l} limits must satisfy flow_min <= 0 <= flow_max"
                )));
            }
        }
        if self.reserve_fraction < 0.0 {
            return Err(UcError::Config(
                "reserve_fraction must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Number of units, in service or not.
    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    /// Spinning reserve requirement for a total demand.
    pub fn reserve_requirement(&self, total_demand: f64) -> f64 {
        self.reserve_fraction * total_demand
    }

    /// Sum of in-service capacities.
    pub fn total_capacity(&self) -> f64 {
        self.units
            .iter()
            .filter(|u| u.in_service)
            .map(|u| u.p_max)
            .sum()
    }

    /// Counter clip used by the feature encoding: the largest of min-up,
    /// min-down, and stair count over all units.
    pub fn counter_cap(&self) -> u32 {
        self.units
            .iter()
            .map(|u| u.min_up.max(u.min_down).max(u.stair_count() as u32))
            .max()
            .unwrap_or(1)
    }

    /// Returns a copy with unit `idx` taken out of service.
    pub fn with_unit_outage(&self, idx: usize) -> Result<Self> {
        if idx >= self.n_units() {
            return Err(UcError::Config(format!("unit index {idx} out of range")));
        }
        let mut grid = self.clone();
        grid.units[idx].in_service = false;
        Ok(grid)
    }

    /// Returns a copy with line `idx` removed and PTDF recomputed.
    /// Fails if the removal islands the network.
    pub fn with_line_outage(&self, idx: usize) -> Result<Self> {
        if idx >= self.lines.len() {
            return Err(UcError::Config(format!("line index {idx} out of range")));
        }
        let mut grid = self.clone();
        grid.lines.remove(idx);
        let (ptdf_unit, ptdf_load) = compute_ptdf(&grid)?;
        grid.ptdf_unit = ptdf_unit;
        grid.ptdf_load = ptdf_load;
        Ok(grid)
    }
}

/// Per-bus demand over a horizon, plus the forecast window exposed to the
/// learning agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadScenario {
    /// Number of periods T.
    pub horizon: usize,
    /// Number of buses M.
    pub n_buses: usize,
    /// Row-major T x M demand matrix (MW).
    pub demand: Vec<Vec<f64>>,
    /// Forecast lookahead k exposed in the state encoding.
    pub forecast_window: usize,
}

impl LoadScenario {
    /// Builds a scenario, checking dimensions and non-negativity.
    pub fn new(demand: Vec<Vec<f64>>, n_buses: usize, forecast_window: usize) -> Result<Self> {
        if demand.is_empty() {
            return Err(UcError::Dimension("demand must cover at least one period".into()));
        }
        if forecast_window < 1 {
            return Err(UcError::Dimension("forecast_window must be at least 1".into()));
        }
        for (t, row) in demand.iter().enumerate() {
            if row.len() != n_buses {
                return Err(UcError::Dimension(format!(
                    "demand row {t} has {} entries, expected {n_buses}",
                    row.len()
                )));
            }
            if row.iter().any(|&d| d < 0.0) {
                return Err(UcError::Dimension(format!("negative demand in period {t}")));
            }
        }
        Ok(LoadScenario {
            horizon: demand.len(),
            n_buses,
            demand,
            forecast_window,
        })
    }

    /// Total system demand in period `t` (0-based).
    pub fn total(&self, t: usize) -> f64 {
        self.demand[t].iter().sum()
    }

    /// Largest total demand over the horizon.
    pub fn peak(&self) -> f64 {
        (0..self.horizon)
            .map(|t| self.total(t))
            .fold(0.0, f64::max)
    }

    /// A contiguous sub-scenario of `len` periods starting at `start`.
    pub fn slice(&self, start: usize, len: usize) -> Result<LoadScenario> {
        if start + len > self.horizon || len == 0 {
            return Err(UcError::Dimension(format!(
                "slice [{start}, {}) outside horizon {}",
                start + len,
                self.horizon
            )));
        }
        Ok(LoadScenario {
            horizon: len,
            n_buses: self.n_buses,
            demand: self.demand[start..start + len].to_vec(),
            forecast_window: self.forecast_window,
        })
    }
}

/// Per-period cost components of a schedule, in dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PeriodCost {
    pub production: f64,
    pub startup: f64,
    pub shutdown: f64,
}

impl PeriodCost {
    pub fn total(&self) -> f64 {
        self.production + self.startup + self.shutdown
    }
}

/// A commitment and dispatch plan over a horizon, with its cost breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// T x N commitment matrix.
    pub v: Vec<Vec<bool>>,
    /// T x N dispatch matrix (MW); zero wherever `v` is false.
    pub p: Vec<Vec<f64>>,
    /// Per-period cost components.
    pub cost_breakdown: Vec<PeriodCost>,
}

impl Schedule {
    /// Number of periods.
    pub fn horizon(&self) -> usize {
        self.v.len()
    }

    /// Number of units.
    pub fn n_units(&self) -> usize {
        self.v.first().map_or(0, Vec::len)
    }

    /// Sum of all cost components over the horizon.
    pub fn total_cost(&self) -> f64 {
        self.cost_breakdown.iter().map(PeriodCost::total).sum()
    }
}
