//! File formats: the grid specification (TOML) and load scenarios (CSV),
//! plus a seeded synthetic load generator for reproducible desk runs.
//!
//! Grid files use 1-based bus numbering; everything is 0-based in memory.
//! Load files carry a `period,bus_1,...,bus_M` header and one row per
//! period, in MW.

use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Deserialize;

use crate::error::{Result, UcError};
use crate::model::{GridSpec, LineSpec, LoadScenario, UnitSpec};

#[derive(Debug, Deserialize)]
struct GridFile {
    system: SystemSection,
    #[serde(default)]
    lines: Vec<LineRow>,
    units: Vec<UnitRow>,
    /// Optional precomputed factors; computed from the lines when absent.
    ptdf_unit: Option<Vec<Vec<f64>>>,
    ptdf_load: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
struct SystemSection {
    n_buses: usize,
    /// 1-based in the file.
    slack_bus: usize,
    #[serde(default = "default_reserve")]
    reserve_fraction: f64,
}

fn default_reserve() -> f64 {
    0.1
}

#[derive(Debug, Deserialize)]
struct LineRow {
    from: usize,
    to: usize,
    reactance: f64,
    flow_min: f64,
    flow_max: f64,
}

#[derive(Debug, Deserialize)]
struct UnitRow {
    id: usize,
    /// 1-based in the file.
    bus: usize,
    p_max: f64,
    p_min: f64,
    cost_fixed: f64,
    cost_linear: f64,
    cost_quadratic: f64,
    startup_stairs: Vec<f64>,
    shutdown_cost: f64,
    ramp_up: f64,
    ramp_down: f64,
    startup_ramp: f64,
    shutdown_ramp: f64,
    min_up: u32,
    min_down: u32,
    init_status: bool,
    init_duration: u32,
    #[serde(default)]
    init_power: Option<f64>,
}

/// Parses a grid specification file, converting bus numbers to 0-based
/// and computing PTDF matrices when the file does not carry them.
pub fn load_grid(path: &Path) -> Result<GridSpec> {
    let text = std::fs::read_to_string(path)?;
    let file: GridFile = toml::from_str(&text).map_err(|e| UcError::Parse {
        path: path.display().to_string(),
        line: e.span().map(|s| text[..s.start].lines().count()),
        reason: e.message().to_string(),
    })?;
    let m = file.system.n_buses;
    let rebase = |bus: usize, what: &str| -> Result<usize> {
        if bus == 0 || bus > m {
            return Err(UcError::Parse {
                path: path.display().to_string(),
                line: None,
                reason: format!("{what} bus {bus} outside 1..={m}"),
            });
        }
        Ok(bus - 1)
    };
    let slack_bus = rebase(file.system.slack_bus, "slack")?;
    let lines = file
        .lines
        .iter()
        .map(|l| {
            Ok(LineSpec {
                from: rebase(l.from, "line from")?,
                to: rebase(l.to, "line to")?,
                reactance: l.reactance,
                flow_min: l.flow_min,
                flow_max: l.flow_max,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let units = file
        .units
        .iter()
        .map(|u| {
            Ok(UnitSpec {
                id: u.id,
                bus: rebase(u.bus, "unit")?,
                p_max: u.p_max,
                p_min: u.p_min,
                a: u.cost_fixed,
                b: u.cost_linear,
                c: u.cost_quadratic,
                startup_stairs: u.startup_stairs.clone(),
                shutdown_cost: u.shutdown_cost,
                ramp_up: u.ramp_up,
                ramp_down: u.ramp_down,
                startup_ramp: u.startup_ramp,
                shutdown_ramp: u.shutdown_ramp,
                min_up: u.min_up,
                min_down: u.min_down,
                init_status: u.init_status,
                init_duration: u.init_duration,
                init_power: u.init_power,
                in_service: true,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grid = GridSpec::new(m, units, lines, slack_bus, file.system.reserve_fraction)?;
    if let (Some(pu), Some(pl)) = (file.ptdf_unit, file.ptdf_load) {
        if pu.len() != grid.n_units() || pl.len() != m {
            return Err(UcError::Parse {
                path: path.display().to_string(),
                line: None,
                reason: "ptdf matrices disagree with unit/bus counts".into(),
            });
        }
        grid.ptdf_unit = pu;
        grid.ptdf_load = pl;
    }
    Ok(grid)
}

/// Parses a load CSV (`period,bus_1,...,bus_M` header) and applies a
/// demand multiplier.
pub fn load_loads(
    path: &Path,
    n_buses: usize,
    forecast_window: usize,
    scale: f64,
) -> Result<LoadScenario> {
    let parse_err = |line: usize, reason: String| UcError::Parse {
        path: path.display().to_string(),
        line: Some(line),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(1, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.len() != n_buses + 1 {
        return Err(parse_err(
            1,
            format!(
                "header has {} columns, grid has {} buses (expected {})",
                headers.len(),
                n_buses,
                n_buses + 1
            ),
        ));
    }
    let mut demand = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != n_buses + 1 {
            return Err(parse_err(line, format!("expected {} fields", n_buses + 1)));
        }
        let row = record
            .iter()
            .skip(1)
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|e| parse_err(line, format!("bad number {field:?}: {e}")))
                    .map(|d| d * scale)
            })
            .collect::<Result<Vec<f64>>>()?;
        demand.push(row);
    }
    LoadScenario::new(demand, n_buses, forecast_window)
}

/// Parses both instance files and reports soft warnings (capacity margin,
/// degenerate scaling).
pub fn ingest(
    grid_path: &Path,
    loads_path: &Path,
    scale: f64,
    forecast_window: usize,
) -> Result<(GridSpec, LoadScenario, Vec<String>)> {
    let grid = load_grid(grid_path)?;
    let loads = load_loads(loads_path, grid.n_buses, forecast_window, scale)?;
    let mut warnings = Vec::new();
    if scale == 0.0 {
        warnings.push("scale 0: all demand zeroed".to_string());
    }
    let peak = loads.peak();
    let capacity = grid.total_capacity();
    if peak > capacity {
        warnings.push(format!(
            "peak demand {peak:.1} MW exceeds total capacity {capacity:.1} MW"
        ));
    } else if capacity > 0.0 {
        warnings.push(format!(
            "peak/capacity ratio {:.3} ({peak:.1} of {capacity:.1} MW)",
            peak / capacity
        ));
    }
    Ok((grid, loads, warnings))
}

/// Writes a load scenario in the CSV format accepted by [`load_loads`].
pub fn write_loads_csv(path: &Path, loads: &LoadScenario) -> Result<()> {
    use std::io::Write;
    let mut out = String::new();
    out.push_str("period");
    for j in 1..=loads.n_buses {
        out.push_str(&format!(",bus_{j}"));
    }
    out.push('\n');
    for (t, row) in loads.demand.iter().enumerate() {
        out.push_str(&format!("{}", t + 1));
        for d in row {
            out.push_str(&format!(",{d:.3}"));
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Seeded synthetic daily loads: a double-peak weekday shape with a
/// weekend dip and multiplicative noise, scaled so the horizon peak hits
/// `peak_fraction` of the fleet capacity and split across buses by
/// weight.
pub fn generate_loads(
    grid: &GridSpec,
    days: usize,
    seed: u64,
    peak_fraction: f64,
    bus_weights: &[f64],
    forecast_window: usize,
) -> Result<LoadScenario> {
    if bus_weights.len() != grid.n_buses {
        return Err(UcError::Dimension(format!(
            "{} bus weights for {} buses",
            bus_weights.len(),
            grid.n_buses
        )));
    }
    let weight_sum: f64 = bus_weights.iter().sum();
    if weight_sum <= 0.0 || bus_weights.iter().any(|&w| w < 0.0) {
        return Err(UcError::Config("bus weights must be non-negative and sum > 0".into()));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut totals = Vec::with_capacity(days * 24);
    for day in 0..days {
        let weekend = day % 7 >= 5;
        let day_factor = if weekend { 0.88 } else { 1.0 };
        for hour in 0..24 {
            let h = hour as f64;
            let morning = 0.25 * (-((h - 8.5) / 2.5).powi(2)).exp();
            let evening = 0.38 * (-((h - 18.5) / 3.0).powi(2)).exp();
            let shape = 0.52 + morning + evening;
            let noise = 1.0 + 0.02 * rng.gen_range(-1.0..1.0);
            totals.push(shape * day_factor * noise);
        }
    }
    let raw_peak = totals.iter().cloned().fold(0.0f64, f64::max);
    let target_peak = peak_fraction * grid.total_capacity();
    let scale = if raw_peak > 0.0 { target_peak / raw_peak } else { 0.0 };
    let demand = totals
        .iter()
        .map(|&tot| {
            bus_weights
                .iter()
                .map(|w| tot * scale * w / weight_sum)
                .collect()
        })
        .collect();
    LoadScenario::new(demand, grid.n_buses, forecast_window)
}
