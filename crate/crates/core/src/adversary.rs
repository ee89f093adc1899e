//! Falsification behavior inside the surveillance-consistent intervals.
//!
//! A self-interested vehicle picks the report minimizing its own adjustment
//! cost given the announced rule; several such vehicles are resolved by
//! iterated best response. A malicious attacker picks deviations for the
//! whole untrusted set that maximize the true system cost.
//!
//! Both searches work on a uniform grid augmented with order breakpoints.
//! The outcome is discontinuous where a vehicle's effective ETA ties another
//! vehicle's (the id tie-break flips the order), so candidates are placed at
//! `±BREAKPOINT_OFFSET` around every tie.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::{apply_rule, effective_etas, RuleParams};
use crate::scenario::{DeviationVector, ReportVector, Scenario};

pub const BREAKPOINT_OFFSET: f64 = 1e-9;

/// Cap on product-grid size for the malicious search. Larger untrusted sets
/// fall back to coarser per-dimension grids.
pub const MAX_PRODUCT_GRID: usize = 250_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestResponseConfig {
    pub grid_points: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for BestResponseConfig {
    fn default() -> Self {
        BestResponseConfig {
            grid_points: 201,
            max_iters: 100,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub grid_points_per_dim: usize,
    pub refine_iters: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            grid_points_per_dim: 21,
            refine_iters: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseResult {
    pub delta_star: f64,
    /// Own true cost at `delta_star`.
    pub own_cost: f64,
    /// Spacing of the uniform part of the candidate set.
    pub grid_resolution: f64,
    pub candidates_evaluated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub deltas: DeviationVector,
    pub converged: bool,
    /// Number of Gauss-Seidel sweeps performed.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub deltas: DeviationVector,
    /// True system cost under `deltas`; a lower bound on the true maximum.
    pub worst_cost: f64,
    pub evaluations: usize,
}

fn reports_for(scenario: &Scenario, deltas: &[f64]) -> ReportVector {
    ReportVector {
        tau_hat: scenario
            .vehicles
            .iter()
            .zip(deltas)
            .map(|(v, d)| v.tau + d)
            .collect(),
    }
}

/// Assigned times when the given deviations are reported under `params`.
fn assigned_times(scenario: &Scenario, params: RuleParams, deltas: &[f64]) -> Vec<f64> {
    apply_rule(&reports_for(scenario, deltas), scenario, params)
        .expect("scenario is nonempty and reports match")
        .times
}

/// True system cost `sum (a_i - tau_i)^2` under the given deviations.
pub fn true_system_cost(scenario: &Scenario, params: RuleParams, deltas: &[f64]) -> f64 {
    assigned_times(scenario, params, deltas)
        .iter()
        .zip(&scenario.vehicles)
        .map(|(a, v)| (a - v.tau) * (a - v.tau))
        .sum()
}

fn own_cost(scenario: &Scenario, params: RuleParams, deltas: &[f64], idx: usize) -> f64 {
    let a = assigned_times(scenario, params, deltas)[idx];
    let tau = scenario.vehicles[idx].tau;
    (a - tau) * (a - tau)
}

/// `points` evenly spaced values on `[-eps, eps]` with exact endpoints.
fn uniform_grid(eps: f64, points: usize) -> Vec<f64> {
    if eps == 0.0 || points < 2 {
        return vec![0.0];
    }
    let last = points - 1;
    (0..points)
        .map(|k| match k {
            0 => -eps,
            k if k == last => eps,
            k => -eps + 2.0 * eps * k as f64 / last as f64,
        })
        .collect()
}

fn sort_dedup(values: &mut Vec<f64>) {
    values.sort_by(|a, b| a.total_cmp(b));
    values.dedup();
}

/// Deviations of vehicle `idx` at which its effective ETA ties another
/// vehicle's, each with offsets on both sides, restricted to `[-eps, eps]`.
fn breakpoint_candidates(
    scenario: &Scenario,
    params: RuleParams,
    deltas: &[f64],
    idx: usize,
) -> Vec<f64> {
    let v = &scenario.vehicles[idx];
    if v.epsilon == 0.0 || params.w == 1.0 {
        return Vec::new();
    }
    let u = effective_etas(&reports_for(scenario, deltas), scenario, params);
    let half = params.kappa * v.epsilon;
    let (lo, hi) = (v.surv_tau - half, v.surv_tau + half);
    let mut out = Vec::new();
    for (j, &target) in u.iter().enumerate() {
        if j == idx {
            continue;
        }
        // Invert the blend: clamped + w (surv - clamped) = target.
        let clamped = (target - params.w * v.surv_tau) / (1.0 - params.w);
        if clamped < lo || clamped > hi {
            continue;
        }
        let delta = clamped - v.tau;
        for d in [delta - BREAKPOINT_OFFSET, delta, delta + BREAKPOINT_OFFSET] {
            if d.abs() <= v.epsilon {
                out.push(d);
            }
        }
    }
    out
}

fn index_of(scenario: &Scenario, id: usize) -> Result<usize> {
    match scenario.vehicle(id) {
        None => Err(Error::invalid(format!(
            "vehicle {id} out of range 1..={}",
            scenario.n()
        ))),
        Some(v) if !v.untrusted => Err(Error::invalid(format!("vehicle {id} is not untrusted"))),
        Some(_) => Ok(id - 1),
    }
}

/// Prefers `a` over `b` for a best response: lower cost, then smaller |δ|,
/// then smaller δ.
fn better_response(a: (f64, f64), b: (f64, f64)) -> bool {
    let (da, ca) = a;
    let (db, cb) = b;
    ca < cb || (ca == cb && (da.abs() < db.abs() || (da.abs() == db.abs() && da < db)))
}

/// Best response of untrusted vehicle `id` to the rule and the others'
/// deviations. `others.delta[id - 1]` is ignored.
pub fn best_response(
    scenario: &Scenario,
    params: RuleParams,
    id: usize,
    others: &DeviationVector,
    grid_points: usize,
) -> Result<BestResponseResult> {
    let idx = index_of(scenario, id)?;
    if grid_points < 2 {
        return Err(Error::invalid("best_response needs at least 2 grid points"));
    }
    if others.delta.len() != scenario.n() {
        return Err(Error::invalid(
            "deviation vector length does not match scenario",
        ));
    }
    let eps = scenario.vehicles[idx].epsilon;
    let mut deltas = others.delta.clone();
    deltas[idx] = 0.0;

    let mut candidates = uniform_grid(eps, grid_points);
    candidates.push(0.0);
    candidates.extend(breakpoint_candidates(scenario, params, &deltas, idx));
    sort_dedup(&mut candidates);

    let mut best: Option<(f64, f64)> = None;
    for &d in &candidates {
        deltas[idx] = d;
        let c = own_cost(scenario, params, &deltas, idx);
        if best.map_or(true, |b| better_response((d, c), b)) {
            best = Some((d, c));
        }
    }
    let (delta_star, own_cost) = best.expect("candidate set contains 0");
    Ok(BestResponseResult {
        delta_star,
        own_cost,
        grid_resolution: if eps == 0.0 {
            0.0
        } else {
            2.0 * eps / (grid_points - 1) as f64
        },
        candidates_evaluated: candidates.len(),
    })
}

/// Gauss-Seidel best-response sweeps over the untrusted set in ascending id
/// order, starting from truthful reports. Stops once a full sweep moves no
/// deviation by more than `tol`; otherwise returns the last iterate with
/// `converged = false`.
pub fn iterated_best_response(
    scenario: &Scenario,
    params: RuleParams,
    cfg: &BestResponseConfig,
) -> Result<FixedPointResult> {
    if cfg.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    let mut deltas = DeviationVector::zeros(scenario.n());
    let ids = scenario.untrusted_ids();
    for sweep in 1..=cfg.max_iters {
        let mut max_change: f64 = 0.0;
        for &id in &ids {
            let br = best_response(scenario, params, id, &deltas, cfg.grid_points)?;
            let prev = deltas.delta[id - 1];
            max_change = max_change.max((br.delta_star - prev).abs());
            deltas.delta[id - 1] = br.delta_star;
        }
        if max_change <= cfg.tol {
            return Ok(FixedPointResult {
                deltas,
                converged: true,
                iterations: sweep,
            });
        }
    }
    Ok(FixedPointResult {
        deltas,
        converged: false,
        iterations: cfg.max_iters,
    })
}

/// Per-dimension grid for the malicious search, shrunk so the product stays
/// under [`MAX_PRODUCT_GRID`]. Returns `None` when even three points per
/// dimension would exceed the cap.
fn attack_axes(scenario: &Scenario, ids: &[usize], points: usize) -> Option<Vec<Vec<f64>>> {
    let dims = ids.len() as u32;
    let mut g = points;
    while g > 3 && g.checked_pow(dims).map_or(true, |p| p > MAX_PRODUCT_GRID) {
        g -= 1;
    }
    if 3usize
        .checked_pow(dims)
        .map_or(true, |p| p > MAX_PRODUCT_GRID)
    {
        return None;
    }
    Some(
        ids.iter()
            .map(|&id| {
                let mut axis = uniform_grid(scenario.vehicles[id - 1].epsilon, g);
                axis.push(0.0);
                sort_dedup(&mut axis);
                axis
            })
            .collect(),
    )
}

/// Searches deviations of the untrusted set that maximize true system cost:
/// product grid (endpoints, so all box vertices, and zero always included),
/// then `refine_iters` rounds of coordinate ascent on a 10x finer local grid
/// plus order breakpoints.
pub fn worst_case_deviation(
    scenario: &Scenario,
    params: RuleParams,
    cfg: &AttackConfig,
) -> Result<WorstCase> {
    if cfg.grid_points_per_dim < 3 {
        return Err(Error::invalid(
            "worst_case_deviation needs at least 3 grid points per dimension",
        ));
    }
    let n = scenario.n();
    let ids = scenario.untrusted_ids();
    let mut best = vec![0.0; n];
    let mut best_cost = true_system_cost(scenario, params, &best);
    let mut evaluations = 1usize;
    if ids.is_empty() {
        return Ok(WorstCase {
            deltas: DeviationVector { delta: best },
            worst_cost: best_cost,
            evaluations,
        });
    }

    let mut deltas = vec![0.0; n];
    let consider = |deltas: &[f64], best: &mut Vec<f64>, best_cost: &mut f64, evals: &mut usize| {
        let c = true_system_cost(scenario, params, deltas);
        *evals += 1;
        if c > *best_cost {
            *best_cost = c;
            best.copy_from_slice(deltas);
        }
    };

    match attack_axes(scenario, &ids, cfg.grid_points_per_dim) {
        Some(axes) => {
            // Mixed-radix enumeration of the product grid.
            let mut digits = vec![0usize; ids.len()];
            'outer: loop {
                for (k, &id) in ids.iter().enumerate() {
                    deltas[id - 1] = axes[k][digits[k]];
                }
                consider(&deltas, &mut best, &mut best_cost, &mut evaluations);
                let mut pos = ids.len();
                loop {
                    if pos == 0 {
                        break 'outer;
                    }
                    pos -= 1;
                    digits[pos] += 1;
                    if digits[pos] < axes[pos].len() {
                        break;
                    }
                    digits[pos] = 0;
                }
            }
        }
        None => {
            // Too many dimensions for a product grid: single-coordinate sweeps
            // from truthful reports; coordinate ascent does the rest.
            for &id in &ids {
                deltas.iter_mut().for_each(|d| *d = 0.0);
                for d in uniform_grid(scenario.vehicles[id - 1].epsilon, cfg.grid_points_per_dim) {
                    deltas[id - 1] = d;
                    consider(&deltas, &mut best, &mut best_cost, &mut evaluations);
                }
            }
        }
    }

    let coarse = cfg.grid_points_per_dim - 1;
    for _ in 0..cfg.refine_iters {
        for &id in &ids {
            let idx = id - 1;
            let eps = scenario.vehicles[idx].epsilon;
            if eps == 0.0 {
                continue;
            }
            let fine_step = 2.0 * eps / coarse as f64 / 10.0;
            let center = best[idx];
            let mut local: Vec<f64> = (-10i32..=10)
                .map(|k| (center + k as f64 * fine_step).clamp(-eps, eps))
                .collect();
            local.extend(breakpoint_candidates(scenario, params, &best, idx));
            sort_dedup(&mut local);
            deltas.copy_from_slice(&best);
            for d in local {
                deltas[idx] = d;
                consider(&deltas, &mut best, &mut best_cost, &mut evaluations);
            }
        }
    }

    Ok(WorstCase {
        deltas: DeviationVector { delta: best },
        worst_cost: best_cost,
        evaluations,
    })
}
