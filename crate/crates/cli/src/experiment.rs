//! Experiment orchestration: training, evaluation, the exact baseline,
//! cost comparison, outage studies, and report extraction. Every command
//! is a library function so tests can drive the same paths as the binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use uc_core::actiongen::Provenance;
use uc_core::env::{default_zeta, Env, EnvConfig, MdpState, PERIODS_PER_DAY};
use uc_core::error::{Result, UcError};
use uc_core::exact::{solve_uc_bnb, BnbOutcome, InitialCondition, SolveBudget, UcSubproblem};
use uc_core::learner::{
    greedy_rollout, load_checkpoint, save_checkpoint, train_ensemble, QNetworkParams,
    RolloutReport,
};
use uc_core::model::{
    update_counter, validate_schedule, GridSpec, LoadScenario, PeriodCost, Schedule,
};
use uc_core::{io, TAU_FEAS};

use crate::config::{ExperimentConfig, Scenario};

/// Loaded instance data shared by the commands.
pub struct Workspace {
    pub grid: GridSpec,
    pub loads: LoadScenario,
    pub warnings: Vec<String>,
}

/// Parses the experiment's grid and loads, applying the configured scale.
pub fn prepare(config: &ExperimentConfig) -> Result<Workspace> {
    let (grid, loads, warnings) = io::ingest(
        &config.paths.grid,
        &config.paths.loads,
        config.env.load_scale,
        config.trainer.forecast_window,
    )?;
    let needed = config.split.total_days() * PERIODS_PER_DAY;
    if loads.horizon < needed {
        return Err(UcError::Config(format!(
            "loads cover {} periods, split needs {needed}",
            loads.horizon
        )));
    }
    Ok(Workspace {
        grid,
        loads,
        warnings,
    })
}

fn env_config(config: &ExperimentConfig, grid: &GridSpec) -> EnvConfig {
    EnvConfig {
        zeta: config.env.zeta.unwrap_or_else(|| default_zeta(grid)),
        forecast_window: config.trainer.forecast_window,
    }
}

fn checkpoint_path(out_dir: &Path, member: usize) -> PathBuf {
    out_dir.join("checkpoints").join(format!("member_{member}.ckpt"))
}

/// Artifacts written by a training run.
pub struct TrainArtifacts {
    pub best_member: usize,
    pub checkpoints: Vec<PathBuf>,
    pub training_log: PathBuf,
    pub timing_log: PathBuf,
}

/// Trains the ensemble and writes checkpoints plus the training and
/// timing logs. Wall-clock data stays in its own file so every other
/// artifact is bit-reproducible.
pub fn cmd_train(config: &ExperimentConfig, workspace: &Workspace) -> Result<TrainArtifacts> {
    let grid = &workspace.grid;
    let econf = env_config(config, grid);
    let actions = config.action_config();
    let trainer = config.trainer_config();
    let train_env = Env::over_days(
        grid,
        &workspace.loads,
        0,
        config.split.train_days,
        true,
        actions.clone(),
        econf.clone(),
    )?;
    let val_env = Env::over_days(
        grid,
        &workspace.loads,
        config.split.validation_start(),
        config.split.validation_days,
        false,
        actions,
        econf,
    )?;

    let result = train_ensemble(&train_env, &val_env, &trainer)?;
    let out_dir = &config.paths.out_dir;
    fs::create_dir_all(out_dir.join("checkpoints"))?;

    let fingerprint = config.fingerprint();
    let mut checkpoints = Vec::new();
    for member in &result.members {
        let path = checkpoint_path(out_dir, member.member);
        save_checkpoint(&path, &member.checkpoint, &fingerprint)?;
        checkpoints.push(path);
    }

    let mut log = String::from("member,episode,epsilon,mean_validation_cost,updates,terminal_count\n");
    let mut timing = String::from("member,episode,wall_clock_s\n");
    for member in &result.members {
        for ep in &member.episodes {
            writeln!(
                log,
                "{},{},{},{},{},{}",
                ep.member, ep.episode, ep.epsilon, ep.mean_validation_cost, ep.updates,
                ep.terminal_count
            )
            .unwrap();
            writeln!(timing, "{},{},{}", ep.member, ep.episode, ep.wall_clock_s).unwrap();
        }
    }
    let training_log = out_dir.join("training_log.csv");
    let timing_log = out_dir.join("timing.csv");
    fs::write(&training_log, log)?;
    fs::write(&timing_log, timing)?;

    let meta = serde_json::json!({
        "best_member": result.best_member,
        "fingerprint": fingerprint,
        "members": result.members.iter().map(|m| m.member).collect::<Vec<_>>(),
        "failures": result.failures,
    });
    fs::write(out_dir.join("ensemble_meta.json"), meta.to_string())?;

    Ok(TrainArtifacts {
        best_member: result.best_member,
        checkpoints,
        training_log,
        timing_log,
    })
}

/// One evaluated day of the ensemble.
#[derive(Debug, Clone)]
pub struct RlDay {
    pub day: usize,
    pub member_costs: Vec<f64>,
    /// Members that hit the terminal penalty this day.
    pub infeasible_members: Vec<usize>,
    pub ensemble_cost: f64,
}

/// Greedy evaluation of every stored checkpoint over the test days on the
/// given grid (nominal or contingent). Also validates each member's
/// realized schedules and records the evaluation wall clock.
pub fn run_rl(
    config: &ExperimentConfig,
    workspace: &Workspace,
    grid: &GridSpec,
) -> Result<(Vec<RlDay>, Duration)> {
    let out_dir = &config.paths.out_dir;
    let econf = env_config(config, grid);
    let test_env = Env::over_days(
        grid,
        &workspace.loads,
        config.split.test_start(),
        config.split.test_days,
        false,
        config.action_config(),
        econf,
    )?;

    let fingerprint = config.fingerprint();
    let mut members: Vec<(usize, QNetworkParams)> = Vec::new();
    for member in 0..config.trainer.ensemble_size {
        let path = checkpoint_path(out_dir, member);
        if !path.exists() {
            continue;
        }
        let (params, stored_fp) = load_checkpoint(&path)?;
        if stored_fp != fingerprint {
            eprintln!(
                "warning: checkpoint {} was trained under a different config",
                path.display()
            );
        }
        members.push((member, params));
    }
    if members.is_empty() {
        return Err(UcError::Config(format!(
            "no checkpoints under {}; run train first",
            out_dir.join("checkpoints").display()
        )));
    }

    let started = Instant::now();
    let mut per_member: Vec<(usize, RolloutReport)> = Vec::new();
    for (member, params) in &members {
        let report = greedy_rollout(params, &test_env)?;
        validate_rollout(grid, &test_env.loads, &report, *member)?;
        per_member.push((*member, report));
    }
    let elapsed = started.elapsed();

    let days = test_env.n_days();
    let mut rows = Vec::with_capacity(days);
    for day in 0..days {
        let member_costs: Vec<f64> = per_member.iter().map(|(_, r)| r.day_costs[day]).collect();
        let infeasible_members: Vec<usize> = per_member
            .iter()
            .filter(|(_, r)| r.infeasible_days.contains(&day))
            .map(|(m, _)| *m)
            .collect();
        // The selected day cost is the cheapest member that actually
        // served the day; penalty-flagged members never win the
        // selection while a feasible one exists.
        let feasible_min = per_member
            .iter()
            .filter(|(m, _)| !infeasible_members.contains(m))
            .map(|(_, r)| r.day_costs[day])
            .fold(f64::INFINITY, f64::min);
        let ensemble_cost = if feasible_min.is_finite() {
            feasible_min
        } else {
            member_costs.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        rows.push(RlDay {
            day,
            member_costs,
            infeasible_members,
            ensemble_cost,
        });
    }
    Ok((rows, elapsed))
}

/// Every feasible day of every member must pass full validation; crashed
/// days are flagged in the report instead.
fn validate_rollout(
    grid: &GridSpec,
    loads: &LoadScenario,
    report: &RolloutReport,
    member: usize,
) -> Result<()> {
    for (day, (day_v, day_p)) in report.schedules.iter().enumerate() {
        if report.infeasible_days.contains(&day) {
            continue;
        }
        let initial = &report.initial_states[day];
        let mut grid_at_start = grid.clone();
        for (i, unit) in grid_at_start.units.iter_mut().enumerate() {
            unit.init_status = initial.v[i];
            unit.init_duration = initial.u[i];
            unit.init_power = if initial.v[i] { Some(initial.p[i]) } else { None };
        }
        let sched = Schedule {
            v: day_v.clone(),
            p: day_p.clone(),
            cost_breakdown: vec![PeriodCost::default(); day_v.len()],
        };
        let day_loads = loads.slice(day * PERIODS_PER_DAY, day_v.len())?;
        let violations = validate_schedule(&grid_at_start, &day_loads, &sched, TAU_FEAS)?;
        if !violations.is_empty() {
            return Err(UcError::ContractViolation(format!(
                "member {member} day {day} schedule failed validation: {:?}",
                violations.violations.first()
            )));
        }
    }
    Ok(())
}

/// Writes the RL evaluation CSV (`rl_costs.csv`) and the timing sidecar.
pub fn cmd_evaluate(config: &ExperimentConfig, workspace: &Workspace) -> Result<Vec<RlDay>> {
    let (rows, elapsed) = run_rl(config, workspace, &workspace.grid)?;
    write_rl_csv(&config.paths.out_dir.join("rl_costs.csv"), &rows)?;
    fs::write(
        config.paths.out_dir.join("rl_timing.csv"),
        format!("what,seconds\ntest_week_evaluation,{}\n", elapsed.as_secs_f64()),
    )?;
    Ok(rows)
}

/// Re-runs the greedy rollout of one stored member on the test days and
/// exports its episode trace.
pub fn cmd_trace(
    config: &ExperimentConfig,
    workspace: &Workspace,
    member: usize,
    out_csv: &Path,
) -> Result<()> {
    let path = checkpoint_path(&config.paths.out_dir, member);
    let (params, _) = load_checkpoint(&path)?;
    let econf = env_config(config, &workspace.grid);
    let test_env = Env::over_days(
        &workspace.grid,
        &workspace.loads,
        config.split.test_start(),
        config.split.test_days,
        false,
        config.action_config(),
        econf,
    )?;
    let report = greedy_rollout(&params, &test_env)?;
    let mut out = String::new();
    for (day, (day_v, day_p)) in report.schedules.iter().enumerate() {
        let trace = episode_trace_csv(
            &workspace.grid,
            &report.initial_states[day],
            day_v,
            day_p,
            report.infeasible_days.contains(&day),
            day * PERIODS_PER_DAY,
        )?;
        if day == 0 {
            out.push_str(&trace);
        } else {
            // Drop the repeated header.
            out.push_str(trace.split_once('\n').map(|x| x.1).unwrap_or(""));
        }
    }
    fs::write(out_csv, out)?;
    Ok(())
}

fn write_rl_csv(path: &Path, rows: &[RlDay]) -> Result<()> {
    let members = rows.first().map_or(0, |r| r.member_costs.len());
    let mut out = String::from("day");
    for m in 0..members {
        write!(out, ",member_{m}").unwrap();
    }
    out.push_str(",ensemble,infeasible_members\n");
    for row in rows {
        write!(out, "{}", row.day + 1).unwrap();
        for c in &row.member_costs {
            write!(out, ",{c}").unwrap();
        }
        let flagged = row
            .infeasible_members
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(";");
        writeln!(out, ",{},{flagged}", row.ensemble_cost).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// One baseline day: realized first-day cost of a rolling-window solve.
#[derive(Debug, Clone)]
pub struct BaselineDay {
    pub day: usize,
    pub cost: f64,
    pub gap: f64,
    pub proved_optimal: bool,
    /// Set when the window was infeasible; the day is excluded from
    /// aggregates.
    pub infeasible: bool,
}

/// Rolling-window exact baseline over the test days on the given grid:
/// each day solves a `horizon_days`-day window from the realized state
/// and keeps the first day's cost, then carries the end-of-day state
/// forward.
pub fn run_baseline(
    config: &ExperimentConfig,
    workspace: &Workspace,
    grid: &GridSpec,
) -> Result<(Vec<BaselineDay>, Duration)> {
    let budget = SolveBudget::new(
        Some(Duration::from_secs_f64(config.baseline.time_limit_s)),
        Some(config.baseline.gap),
        config.baseline.node_limit,
    )?;
    let test_start = config.split.test_start() * PERIODS_PER_DAY;
    let test_len = config.split.test_days * PERIODS_PER_DAY;
    let loads = workspace.loads.slice(test_start, test_len)?;

    let started = Instant::now();
    let mut state = InitialCondition::from_grid(grid);
    let mut rows = Vec::new();
    for day in 0..config.split.test_days {
        let window_start = day * PERIODS_PER_DAY;
        let window_len = (config.baseline.horizon_days * PERIODS_PER_DAY)
            .min(test_len - window_start);
        let demand = loads.demand[window_start..window_start + window_len].to_vec();
        let sub = UcSubproblem::new(grid, demand, state.clone());
        match solve_uc_bnb(&sub, &budget) {
            Ok(BnbOutcome::Solved(solve)) => {
                let first_day: f64 = solve.schedule.cost_breakdown[..PERIODS_PER_DAY]
                    .iter()
                    .map(PeriodCost::total)
                    .sum();
                state = advance_state(grid, &state, &solve.schedule, PERIODS_PER_DAY);
                rows.push(BaselineDay {
                    day,
                    cost: first_day,
                    gap: solve.gap,
                    proved_optimal: solve.proved_optimal,
                    infeasible: false,
                });
            }
            Ok(BnbOutcome::NoIncumbent { .. }) | Err(UcError::Infeasible(_)) => {
                rows.push(BaselineDay {
                    day,
                    cost: f64::NAN,
                    gap: f64::NAN,
                    proved_optimal: false,
                    infeasible: true,
                });
                state = InitialCondition::from_grid(grid);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((rows, started.elapsed()))
}

/// Fleet state after the first `periods` rows of a solved schedule.
fn advance_state(
    grid: &GridSpec,
    initial: &InitialCondition,
    schedule: &Schedule,
    periods: usize,
) -> InitialCondition {
    let n = grid.n_units();
    let mut v = initial.v.clone();
    let mut u = initial.u.clone();
    let mut p = initial.p.clone();
    for t in 0..periods.min(schedule.horizon()) {
        for i in 0..n {
            u[i] = update_counter(u[i], v[i], schedule.v[t][i]);
            v[i] = schedule.v[t][i];
            p[i] = schedule.p[t][i];
        }
    }
    InitialCondition { v, p, u }
}

/// Writes `baseline_costs.csv` plus its timing sidecar.
pub fn cmd_baseline(config: &ExperimentConfig, workspace: &Workspace) -> Result<Vec<BaselineDay>> {
    let (rows, elapsed) = run_baseline(config, workspace, &workspace.grid)?;
    write_baseline_csv(&config.paths.out_dir.join("baseline_costs.csv"), &rows)?;
    fs::write(
        config.paths.out_dir.join("baseline_timing.csv"),
        format!("what,seconds\ntest_week_baseline,{}\n", elapsed.as_secs_f64()),
    )?;
    Ok(rows)
}

fn write_baseline_csv(path: &Path, rows: &[BaselineDay]) -> Result<()> {
    let mut out = String::from("day,cost,gap,proved_optimal,infeasible\n");
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.day + 1,
            row.cost,
            row.gap,
            row.proved_optimal,
            row.infeasible
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Percentage excess of a method cost over the baseline cost.
pub fn delta_percent(method: f64, baseline: f64) -> f64 {
    100.0 * (method - baseline) / baseline
}

/// One comparison row.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub day: usize,
    pub method_cost: f64,
    pub baseline_cost: f64,
    pub delta: f64,
}

/// Joins two day-cost tables on the day id; days missing from either side
/// are skipped with a notice on stderr.
pub fn compare_costs(
    method: &[(usize, f64)],
    baseline: &[(usize, f64)],
) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for &(day, method_cost) in method {
        match baseline.iter().find(|(d, _)| *d == day) {
            Some(&(_, baseline_cost)) => rows.push(ComparisonRow {
                day,
                method_cost,
                baseline_cost,
                delta: delta_percent(method_cost, baseline_cost),
            }),
            None => eprintln!("notice: day {day} missing from the baseline table; row omitted"),
        }
    }
    rows
}

/// Reads a day-cost table from a CSV with a `day` column and the named
/// cost column.
pub fn read_day_costs(path: &Path, cost_column: &str) -> Result<Vec<(usize, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| UcError::Parse {
        path: path.display().to_string(),
        line: Some(1),
        reason: "empty file".into(),
    })?;
    let columns: Vec<&str> = header.split(',').collect();
    let day_idx = columns.iter().position(|c| *c == "day").ok_or_else(|| UcError::Parse {
        path: path.display().to_string(),
        line: Some(1),
        reason: "no `day` column".into(),
    })?;
    let cost_idx = columns
        .iter()
        .position(|c| *c == cost_column)
        .ok_or_else(|| UcError::Parse {
            path: path.display().to_string(),
            line: Some(1),
            reason: format!("no `{cost_column}` column"),
        })?;
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse_err = |reason: String| UcError::Parse {
            path: path.display().to_string(),
            line: Some(idx + 2),
            reason,
        };
        let day: usize = fields
            .get(day_idx)
            .ok_or_else(|| parse_err("short row".into()))?
            .parse()
            .map_err(|e| parse_err(format!("bad day: {e}")))?;
        let cost: f64 = fields
            .get(cost_idx)
            .ok_or_else(|| parse_err("short row".into()))?
            .parse()
            .map_err(|e| parse_err(format!("bad cost: {e}")))?;
        if cost.is_nan() {
            continue; // infeasible day, excluded with the CSV flag
        }
        rows.push((day, cost));
    }
    Ok(rows)
}

/// Writes a comparison table and returns its rows.
pub fn cmd_compare(
    method_csv: &Path,
    method_column: &str,
    baseline_csv: &Path,
    out_csv: &Path,
) -> Result<Vec<ComparisonRow>> {
    let method = read_day_costs(method_csv, method_column)?;
    let baseline = read_day_costs(baseline_csv, "cost")?;
    let rows = compare_costs(&method, &baseline);
    let mut out = String::from("day,method_cost,baseline_cost,delta_pct\n");
    for row in &rows {
        writeln!(
            out,
            "{},{},{},{:.2}",
            row.day, row.method_cost, row.baseline_cost, row.delta
        )
        .unwrap();
    }
    if !rows.is_empty() {
        let mean_delta = rows.iter().map(|r| r.delta).sum::<f64>() / rows.len() as f64;
        let total_method: f64 = rows.iter().map(|r| r.method_cost).sum();
        let total_baseline: f64 = rows.iter().map(|r| r.baseline_cost).sum();
        writeln!(
            out,
            "mean,{},{},{:.2}",
            total_method, total_baseline, mean_delta
        )
        .unwrap();
    }
    fs::write(out_csv, out)?;
    Ok(rows)
}

/// Applies an outage scenario to the nominal grid.
pub fn apply_scenario(grid: &GridSpec, scenario: &Scenario) -> Result<GridSpec> {
    match scenario {
        Scenario::Unit { id } => {
            let idx = grid
                .units
                .iter()
                .position(|u| u.id == *id)
                .ok_or_else(|| UcError::Config(format!("no unit with id {id}")))?;
            grid.with_unit_outage(idx)
        }
        Scenario::Line { index } => {
            if *index == 0 || *index > grid.lines.len() {
                return Err(UcError::Config(format!(
                    "line index {index} outside 1..={}",
                    grid.lines.len()
                )));
            }
            grid.with_line_outage(index - 1)
        }
    }
}

/// Evaluates both the trained ensemble and the exact baseline on a
/// contingent system and writes a comparison table.
pub fn cmd_outage(
    config: &ExperimentConfig,
    workspace: &Workspace,
    scenario: &Scenario,
) -> Result<Vec<ComparisonRow>> {
    let contingent = apply_scenario(&workspace.grid, scenario)?;
    let peak = workspace.loads.peak();
    if peak > contingent.total_capacity() {
        return Err(UcError::Infeasible(format!(
            "peak demand {peak:.1} MW exceeds post-outage capacity {:.1} MW",
            contingent.total_capacity()
        )));
    }
    let (rl_days, _) = run_rl(config, workspace, &contingent)?;
    let (baseline_days, _) = run_baseline(config, workspace, &contingent)?;
    let suffix = match scenario {
        Scenario::Unit { id } => format!("unit_{id}"),
        Scenario::Line { index } => format!("line_{index}"),
    };
    let out_dir = &config.paths.out_dir;
    write_rl_csv(&out_dir.join(format!("outage_{suffix}_rl.csv")), &rl_days)?;
    write_baseline_csv(
        &out_dir.join(format!("outage_{suffix}_baseline.csv")),
        &baseline_days,
    )?;
    let method: Vec<(usize, f64)> = rl_days.iter().map(|r| (r.day + 1, r.ensemble_cost)).collect();
    let baseline: Vec<(usize, f64)> = baseline_days
        .iter()
        .filter(|r| !r.infeasible)
        .map(|r| (r.day + 1, r.cost))
        .collect();
    let rows = compare_costs(&method, &baseline);
    let mut out = String::from("day,method_cost,baseline_cost,delta_pct\n");
    for row in &rows {
        writeln!(
            out,
            "{},{},{},{:.2}",
            row.day, row.method_cost, row.baseline_cost, row.delta
        )
        .unwrap();
    }
    fs::write(out_dir.join(format!("outage_{suffix}_compare.csv")), out)?;
    Ok(rows)
}

/// Dumps the candidate set of a given (day, period) state reached by the
/// base-action policy, as a debugging aid.
pub fn cmd_actions(
    config: &ExperimentConfig,
    workspace: &Workspace,
    day: usize,
    period: usize,
    out_csv: &Path,
) -> Result<usize> {
    if day >= config.split.total_days() || period >= PERIODS_PER_DAY {
        return Err(UcError::Config(format!(
            "day {day} / period {period} outside the scenario"
        )));
    }
    let econf = env_config(config, &workspace.grid);
    let env = Env::over_days(
        &workspace.grid,
        &workspace.loads,
        0,
        config.split.total_days(),
        false,
        config.action_config(),
        econf,
    )?;
    // Walk to the requested period with the base action.
    let mut state: MdpState = env.reset(0, None);
    let target_t = day * PERIODS_PER_DAY + period;
    let mut candidates = env.candidate_set(&state)?;
    while state.t < target_t {
        if candidates.is_empty() {
            return Err(UcError::Infeasible(format!(
                "base-action walk hit a terminal at period {}",
                state.t
            )));
        }
        let action = candidates.members[0].v.clone();
        let transition = env.step(&state, &action)?;
        state = transition.next;
        candidates = transition.next_actions.unwrap_or_default();
    }

    let n = workspace.grid.n_units();
    let mut out = String::from("slot,provenance,z,rank");
    for i in 0..n {
        write!(out, ",unit_{}", workspace.grid.units[i].id).unwrap();
    }
    out.push('\n');
    for (slot, member) in candidates.members.iter().enumerate() {
        let (provenance, z, rank) = match member.provenance {
            Provenance::Base => ("base".to_string(), String::new(), String::new()),
            Provenance::Toggle { z, rank } => {
                ("toggle".to_string(), z.to_string(), rank.to_string())
            }
        };
        write!(out, "{slot},{provenance},{z},{rank}").unwrap();
        for &v in &member.v {
            write!(out, ",{}", u8::from(v)).unwrap();
        }
        out.push('\n');
    }
    fs::write(out_csv, out)?;
    Ok(candidates.len())
}

/// Aggregates the training log into per-episode mean and (sample)
/// standard deviation across members, plus a cost-versus-wall-clock
/// series from the timing sidecar.
pub fn cmd_report(out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let log_path = out_dir.join("training_log.csv");
    let text = fs::read_to_string(&log_path)?;
    // episode -> (member, cost)
    let mut by_episode: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse_err = |reason: String| UcError::Parse {
            path: log_path.display().to_string(),
            line: Some(idx + 1),
            reason,
        };
        let episode: usize = fields
            .get(1)
            .ok_or_else(|| parse_err("short row".into()))?
            .parse()
            .map_err(|e| parse_err(format!("bad episode: {e}")))?;
        let cost: f64 = fields
            .get(3)
            .ok_or_else(|| parse_err("short row".into()))?
            .parse()
            .map_err(|e| parse_err(format!("bad cost: {e}")))?;
        by_episode.entry(episode).or_default().push(cost);
    }

    let mut curve = String::from("episode,mean_validation_cost,std_validation_cost\n");
    for (episode, costs) in &by_episode {
        let mean = costs.iter().sum::<f64>() / costs.len() as f64;
        let std = if costs.len() > 1 {
            (costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (costs.len() - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        writeln!(curve, "{episode},{mean},{std}").unwrap();
    }
    let curve_path = out_dir.join("training_curve.csv");
    fs::write(&curve_path, curve)?;

    // Wall-clock series (non-deterministic by nature, kept separate).
    let timing_path = out_dir.join("timing.csv");
    let mut wall_by_episode: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    if timing_path.exists() {
        let text = fs::read_to_string(&timing_path)?;
        for line in text.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 3 {
                continue;
            }
            if let (Ok(episode), Ok(secs)) = (fields[1].parse::<usize>(), fields[2].parse::<f64>())
            {
                wall_by_episode.entry(episode).or_default().push(secs);
            }
        }
    }
    let mut wall = String::from("episode,mean_wall_clock_s,mean_validation_cost\n");
    for (episode, costs) in &by_episode {
        let mean_cost = costs.iter().sum::<f64>() / costs.len() as f64;
        let mean_wall = wall_by_episode
            .get(episode)
            .map(|w| w.iter().sum::<f64>() / w.len() as f64)
            .unwrap_or(0.0);
        writeln!(wall, "{episode},{mean_wall},{mean_cost}").unwrap();
    }
    let wall_path = out_dir.join("walltime_curve.csv");
    fs::write(&wall_path, wall)?;
    Ok((curve_path, wall_path))
}

/// Generates a synthetic load CSV for a grid.
#[allow(clippy::too_many_arguments)]
pub fn cmd_gen_loads(
    grid_path: &Path,
    days: usize,
    seed: u64,
    peak_fraction: f64,
    bus_weights: Option<Vec<f64>>,
    forecast_window: usize,
    out_csv: &Path,
) -> Result<()> {
    let grid = io::load_grid(grid_path)?;
    let weights = bus_weights.unwrap_or_else(|| vec![1.0; grid.n_buses]);
    let loads = io::generate_loads(&grid, days, seed, peak_fraction, &weights, forecast_window)?;
    io::write_loads_csv(out_csv, &loads)?;
    Ok(())
}

/// Episode trace of one rollout day: one row per unit-period with
/// per-unit cost components; the reward column repeats the period total
/// on every row of the period.
pub fn episode_trace_csv(
    grid: &GridSpec,
    initial: &MdpState,
    day_v: &[Vec<bool>],
    day_p: &[Vec<f64>],
    crashed: bool,
    first_period: usize,
) -> Result<String> {
    use uc_core::model::{production_cost, shutdown_cost, startup_cost_from_counter};
    let mut out =
        String::from("t,unit,v,p,cost_production,cost_startup,cost_shutdown,reward,terminal\n");
    let mut v_prev = initial.v.clone();
    let mut u_prev = initial.u.clone();
    for t in 0..day_v.len() {
        let mut rows = Vec::with_capacity(grid.n_units());
        let mut period_total = 0.0;
        for (i, unit) in grid.units.iter().enumerate() {
            let v = day_v[t][i];
            let p = day_p[t][i];
            let prod = production_cost(unit, v, p)?;
            let start = startup_cost_from_counter(unit, u_prev[i], v_prev[i], v);
            let stop = shutdown_cost(unit, v_prev[i], v);
            period_total += prod + start + stop;
            rows.push((unit.id, v, p, prod, start, stop));
            u_prev[i] = update_counter(u_prev[i], v_prev[i], v);
            v_prev[i] = v;
        }
        let terminal = crashed && t + 1 == day_v.len();
        for (id, v, p, prod, start, stop) in rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                first_period + t + 1,
                id,
                u8::from(v),
                p,
                prod,
                start,
                stop,
                -period_total,
                terminal
            )
            .unwrap();
        }
    }
    Ok(out)
}
