//! Exact solver for the separation-constrained sequencing problem.
//!
//! For a fixed landing order, minimizing `sum (a_k - t_k)^2` subject to
//! `a_{k+1} - a_k >= s_min` becomes isotonic regression after the change of
//! variables `b_k = a_k - k * s_min`, which pool-adjacent-violators solves
//! exactly. The landing order is the reported-ETA order.

use itertools::Itertools;

use crate::error::{Error, Result};

/// Absolute tolerance on the separation constraint.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Largest instance accepted by [`brute_force_schedule`].
pub const BRUTE_FORCE_MAX_N: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// `order[k]` is the id of the k-th vehicle to land.
    pub order: Vec<usize>,
    /// Assigned arrival times indexed by `id - 1`.
    pub times: Vec<f64>,
    /// `sum (a_i - ref_i)^2` against the reference ETAs the schedule was solved for.
    pub objective: f64,
}

impl Schedule {
    /// Arrival times in landing order.
    pub fn times_in_order(&self) -> Vec<f64> {
        self.order.iter().map(|&id| self.times[id - 1]).collect()
    }

    /// True if consecutive landings respect `s_min` up to [`FEASIBILITY_TOL`].
    pub fn is_feasible(&self, s_min: f64) -> bool {
        self.times_in_order()
            .windows(2)
            .all(|w| w[1] - w[0] >= s_min - FEASIBILITY_TOL)
    }
}

/// Pool-adjacent-violators for nondecreasing least squares with unit weights.
/// Returns the fitted values.
fn pava(z: &[f64]) -> Vec<f64> {
    // (sum, count) per block
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(z.len());
    for &v in z {
        let mut sum = v;
        let mut count = 1usize;
        while let Some(&(psum, pcount)) = blocks.last() {
            if psum / pcount as f64 > sum / count as f64 {
                sum += psum;
                count += pcount;
                blocks.pop();
            } else {
                break;
            }
        }
        blocks.push((sum, count));
    }
    let mut fitted = Vec::with_capacity(z.len());
    for (sum, count) in blocks {
        let mean = sum / count as f64;
        fitted.extend(std::iter::repeat(mean).take(count));
    }
    fitted
}

/// Optimal separation-feasible arrival times for a fixed landing order.
pub fn assign_times(ref_etas_in_order: &[f64], s_min: f64) -> Result<Vec<f64>> {
    if ref_etas_in_order.is_empty() {
        return Err(Error::invalid("assign_times: empty input"));
    }
    if !(s_min >= 0.0) {
        return Err(Error::invalid(format!(
            "s_min must be non-negative, got {s_min}"
        )));
    }
    let z: Vec<f64> = ref_etas_in_order
        .iter()
        .enumerate()
        .map(|(k, &t)| t - k as f64 * s_min)
        .collect();
    Ok(pava(&z)
        .into_iter()
        .enumerate()
        .map(|(k, b)| b + k as f64 * s_min)
        .collect())
}

fn squared_error(times: &[f64], refs: &[f64]) -> f64 {
    times.iter().zip(refs).map(|(a, t)| (a - t) * (a - t)).sum()
}

fn schedule_for_order(ref_etas: &[f64], order: Vec<usize>, s_min: f64) -> Result<Schedule> {
    let in_order: Vec<f64> = order.iter().map(|&id| ref_etas[id - 1]).collect();
    let assigned = assign_times(&in_order, s_min)?;
    let mut times = vec![0.0; ref_etas.len()];
    for (&id, a) in order.iter().zip(assigned) {
        times[id - 1] = a;
    }
    let objective = squared_error(&times, ref_etas);
    Ok(Schedule {
        order,
        times,
        objective,
    })
}

/// Landing order by ascending reference ETA, ties by ascending id.
pub fn landing_order(ref_etas: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=ref_etas.len()).collect();
    order.sort_by(|&a, &b| ref_etas[a - 1].total_cmp(&ref_etas[b - 1]).then(a.cmp(&b)));
    order
}

/// Solves the nominal sequencing problem for reference ETAs keyed by id.
pub fn solve_schedule(ref_etas: &[f64], s_min: f64) -> Result<Schedule> {
    if ref_etas.is_empty() {
        return Err(Error::invalid("solve_schedule: empty input"));
    }
    schedule_for_order(ref_etas, landing_order(ref_etas), s_min)
}

/// Enumerates all landing orders and keeps the cheapest; ties go to the
/// lexicographically smallest order. Test oracle, `N <= 8`.
pub fn brute_force_schedule(ref_etas: &[f64], s_min: f64) -> Result<Schedule> {
    let n = ref_etas.len();
    if n == 0 {
        return Err(Error::invalid("brute_force_schedule: empty input"));
    }
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::invalid(format!(
            "brute_force_schedule: N = {n} exceeds {BRUTE_FORCE_MAX_N}"
        )));
    }
    let mut best: Option<Schedule> = None;
    // itertools yields permutations in lexicographic order of the input.
    for order in (1..=n).permutations(n) {
        let candidate = schedule_for_order(ref_etas, order, s_min)?;
        if best
            .as_ref()
            .map_or(true, |b| candidate.objective < b.objective)
        {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one permutation"))
}

/// Per-vehicle squared deviation of a schedule from reference ETAs, and the total.
pub fn schedule_cost(schedule: &Schedule, reference_etas: &[f64]) -> Result<(f64, Vec<f64>)> {
    if schedule.times.len() != reference_etas.len() {
        return Err(Error::invalid(format!(
            "schedule has {} vehicles, reference has {}",
            schedule.times.len(),
            reference_etas.len()
        )));
    }
    let per: Vec<f64> = schedule
        .times
        .iter()
        .zip(reference_etas)
        .map(|(a, t)| (a - t) * (a - t))
        .collect();
    Ok((per.iter().sum(), per))
}
