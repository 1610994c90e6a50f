//! Single-period toggle problems: among all next-period commitments with
//! exactly `z` status changes outside the locked set, find the K best by
//! the priority objective `sum_i (v_next_i - v_i) * rho_i`.

use crate::error::Result;
use crate::exact::{flips_allowed, fuel_prices, price_period, ChainState, UcSubproblem};

/// Exhaustive toggle-set search is used up to this many combinations.
const EXHAUSTIVE_COMBO_CAP: u128 = 100_000;

/// Solves the toggle problem and returns up to `top_k` feasible commitment
/// vectors with exactly `z` toggles, cheapest priority objective first,
/// ties broken lexicographically. An empty list means no feasible vector
/// exists for this `z`.
pub fn solve_toggle_problem(sub: &UcSubproblem, top_k: usize) -> Result<Vec<(Vec<bool>, f64)>> {
    sub.validate()?;
    let grid = sub.grid;
    let n = grid.n_units();
    let z = sub
        .toggle_count
        .expect("toggle problem requires a toggle count");
    let rho = fuel_prices(grid)?;
    let state = ChainState::from_initial(&sub.initial);

    // Units free to flip: outside the excluded set and not held by unit
    // availability, minimum up/down counters, or the shutdown-ramp lock.
    // Locks are per-unit, so screening single flips suffices for sets.
    let free: Vec<usize> = (0..n)
        .filter(|&i| {
            if sub.excluded_units.contains(&i) {
                return false;
            }
            let mut flipped = sub.initial.v.clone();
            flipped[i] = !flipped[i];
            flips_allowed(grid, &state, &flipped)
        })
        .collect();

    if z > free.len() {
        return Ok(Vec::new());
    }

    let mut feasible: Vec<(f64, Vec<bool>)> = Vec::new();
    let mut evaluate = |toggle_set: &[usize]| -> Result<()> {
        let mut v = sub.initial.v.clone();
        let mut objective = 0.0;
        for &i in toggle_set {
            v[i] = !v[i];
            objective += if v[i] { rho[i] } else { -rho[i] };
        }
        if !flips_allowed(grid, &state, &v) {
            return Ok(());
        }
        let priced = price_period(grid, &sub.demand[0], sub.reserve_req(0), &state, &v, None)?;
        if priced.is_some() {
            feasible.push((objective, v));
        }
        Ok(())
    };

    let combos = binomial(free.len() as u128, z as u128);
    if combos <= EXHAUSTIVE_COMBO_CAP {
        for set in combinations(&free, z) {
            evaluate(&set)?;
        }
    } else {
        // Graceful degradation: greedy beam over the units whose toggle
        // contributes least to the objective, wide enough to cover
        // 10 * top_k combinations.
        let mut ranked = free.clone();
        ranked.sort_by(|&a, &b| {
            let contrib = |i: usize| if sub.initial.v[i] { -rho[i] } else { rho[i] };
            contrib(a)
                .partial_cmp(&contrib(b))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut width = z;
        while width < ranked.len() && binomial(width as u128, z as u128) < 10 * top_k as u128 {
            width += 1;
        }
        for set in combinations(&ranked[..width], z) {
            evaluate(&set)?;
        }
    }

    feasible.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    feasible.truncate(top_k);
    Ok(feasible.into_iter().map(|(obj, v)| (v, obj)).collect())
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result.saturating_mul(n - i) / (i + 1);
        if result > EXHAUSTIVE_COMBO_CAP * 1000 {
            return u128::MAX / 2;
        }
    }
    result
}

/// All k-subsets of `items`, in lexicographic index order.
fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn recurse(items: &[usize], k: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        let needed = k - current.len();
        for i in start..=items.len().saturating_sub(needed) {
            current.push(items[i]);
            recurse(items, k, i + 1, current, out);
            current.pop();
        }
    }
    recurse(items, k, 0, &mut current, &mut out);
    out
}
