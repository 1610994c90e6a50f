//! Power transfer distribution factors under the DC approximation.
//!
//! For a connected network with line susceptances `b_l = 1/x_l`, the flow
//! on line l caused by 1 MW injected at bus j (withdrawn at the slack) is
//!
//! ```text
//! ptdf[j][l] = b_l * (theta_from - theta_to),   B' theta = e_j
//! ```
//!
//! where B' is the bus susceptance matrix with the slack row and column
//! removed and the slack angle pinned at zero. The slack-bus row is zero
//! by construction.

use nalgebra::DMatrix;

use crate::error::{Result, UcError};
use crate::model::GridSpec;

/// Unit-to-line and bus-to-line factor matrices, row per unit/bus.
pub type PtdfMatrices = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Builds the unit-to-line (N x L) and bus-to-line (M x L) PTDF matrices.
pub fn compute_ptdf(grid: &GridSpec) -> Result<PtdfMatrices> {
    let m = grid.n_buses;
    let n_lines = grid.lines.len();
    check_connected(grid)?;

    // Bus PTDF rows, slack row left all-zero.
    let mut bus_ptdf = vec![vec![0.0; n_lines]; m];
    if n_lines > 0 {
        let reduced = reduced_susceptance(grid);
        let lu = reduced.lu();
        // Map full bus index -> reduced index.
        let red_idx: Vec<Option<usize>> = (0..m)
            .map(|b| {
                if b == grid.slack_bus {
                    None
                } else if b < grid.slack_bus {
                    Some(b)
                } else {
                    Some(b - 1)
                }
            })
            .collect();
        for bus in 0..m {
            let Some(r) = red_idx[bus] else { continue };
            let mut rhs = nalgebra::DVector::zeros(m - 1);
            rhs[r] = 1.0;
            let theta = lu.solve(&rhs).ok_or_else(|| {
                UcError::Islanding("singular susceptance matrix".to_string())
            })?;
            let angle = |b: usize| red_idx[b].map_or(0.0, |i| theta[i]);
            for (l, line) in grid.lines.iter().enumerate() {
                bus_ptdf[bus][l] = (angle(line.from) - angle(line.to)) / line.reactance;
            }
        }
    }

    let ptdf_unit = grid
        .units
        .iter()
        .map(|u| bus_ptdf[u.bus].clone())
        .collect();
    Ok((ptdf_unit, bus_ptdf))
}

/// Line flows implied by the PTDF factors: injections minus withdrawals.
///
/// `injections[i]` is unit i's output; `loads[j]` is the demand at bus j.
pub fn dc_line_flows(grid: &GridSpec, injections: &[f64], loads: &[f64]) -> Vec<f64> {
    let n_lines = grid.lines.len();
    (0..n_lines)
        .map(|l| {
            let mut f = 0.0;
            for (i, &p) in injections.iter().enumerate() {
                f += p * grid.ptdf_unit[i][l];
            }
            for (j, &d) in loads.iter().enumerate() {
                f -= d * grid.ptdf_load[j][l];
            }
            f
        })
        .collect()
}

fn reduced_susceptance(grid: &GridSpec) -> DMatrix<f64> {
    let m = grid.n_buses;
    let mut full = DMatrix::zeros(m, m);
    for line in &grid.lines {
        let b = 1.0 / line.reactance;
        full[(line.from, line.from)] += b;
        full[(line.to, line.to)] += b;
        full[(line.from, line.to)] -= b;
        full[(line.to, line.from)] -= b;
    }
    full.remove_row(grid.slack_bus).remove_column(grid.slack_bus)
}

fn check_connected(grid: &GridSpec) -> Result<()> {
    let m = grid.n_buses;
    if m == 0 {
        return Err(UcError::Dimension("grid has no buses".into()));
    }
    if m == 1 {
        return Ok(());
    }
    let mut adjacency = vec![Vec::new(); m];
    for line in &grid.lines {
        adjacency[line.from].push(line.to);
        adjacency[line.to].push(line.from);
    }
    let mut seen = vec![false; m];
    let mut stack = vec![grid.slack_bus];
    seen[grid.slack_bus] = true;
    while let Some(b) = stack.pop() {
        for &next in &adjacency[b] {
            if !seen[next] {
                seen[next] = true;
                stack.push(next);
            }
        }
    }
    let unreachable: Vec<usize> = (0..m).filter(|&b| !seen[b]).collect();
    if unreachable.is_empty() {
        Ok(())
    } else {
        Err(UcError::Islanding(format!(
            "buses {unreachable:?} unreachable from slack bus {}",
            grid.slack_bus
        )))
    }
}
