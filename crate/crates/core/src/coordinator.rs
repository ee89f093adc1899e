//! Outer search over rule parameters: against self-interested misreporting
//! (minimize true cost under the deviators' best responses) and against
//! malicious spoofing (minimize the worst-case true cost).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    iterated_best_response, true_system_cost, worst_case_deviation, AttackConfig,
    BestResponseConfig,
};
use crate::error::{Error, Result};
use crate::rules::RuleParams;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneMode {
    SelfInterested,
    Malicious,
}

/// Which ETAs the tuning objective is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTarget {
    /// True ETAs, as known to the simulation.
    #[default]
    TrueEta,
    /// Surveillance ETAs stand in for the truth, as a deployed coordinator would have to.
    SurveillanceProxy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaEval {
    pub params: RuleParams,
    pub objective: f64,
    /// Best-response convergence; always true in malicious mode.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub theta_star: RuleParams,
    pub objective: f64,
    /// Every grid point, sorted by `(w, kappa)`.
    pub per_theta: Vec<ThetaEval>,
    pub mode: TuneMode,
}

/// `w` in `{0, 0.1, ..., 1}` crossed with `kappa` in `{0.25, 0.5, 0.75, 1}`,
/// plus the baseline.
pub fn default_theta_grid() -> Vec<RuleParams> {
    let ws: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    theta_grid(&ws, &[0.25, 0.5, 0.75, 1.0]).expect("default grid is valid")
}

/// Cartesian product of the given values with the baseline appended when
/// missing. Duplicates are removed.
pub fn theta_grid(ws: &[f64], kappas: &[f64]) -> Result<Vec<RuleParams>> {
    let mut grid = Vec::with_capacity(ws.len() * kappas.len() + 1);
    for &w in ws {
        for &kappa in kappas {
            grid.push(RuleParams::new(w, kappa)?);
        }
    }
    grid.push(RuleParams::BASELINE);
    sort_grid(&mut grid);
    grid.dedup();
    Ok(grid)
}

fn sort_grid(grid: &mut [RuleParams]) {
    grid.sort_by(|a, b| a.w.total_cmp(&b.w).then(a.kappa.total_cmp(&b.kappa)));
}

fn scoring_scenario(scenario: &Scenario, eval: EvalTarget) -> Scenario {
    match eval {
        EvalTarget::TrueEta => scenario.clone(),
        EvalTarget::SurveillanceProxy => {
            let mut proxy = scenario.clone();
            for v in &mut proxy.vehicles {
                v.tau = v.surv_tau;
            }
            proxy.sigma = 0.0;
            proxy
        }
    }
}

/// Picks the minimum; ties go to smaller `w`, then larger `kappa`.
fn select(per_theta: Vec<ThetaEval>, mode: TuneMode) -> TuneResult {
    let mut best = 0;
    for (k, e) in per_theta.iter().enumerate().skip(1) {
        let b = &per_theta[best];
        if e.objective < b.objective
            || (e.objective == b.objective
                && (e.params.w < b.params.w
                    || (e.params.w == b.params.w && e.params.kappa > b.params.kappa)))
        {
            best = k;
        }
    }
    TuneResult {
        theta_star: per_theta[best].params,
        objective: per_theta[best].objective,
        per_theta,
        mode,
    }
}

fn evaluate_grid<F>(theta_grid: &[RuleParams], mode: TuneMode, eval_one: F) -> Result<TuneResult>
where
    F: Fn(RuleParams) -> Result<ThetaEval> + Sync,
{
    if theta_grid.is_empty() {
        return Err(Error::invalid("theta grid is empty"));
    }
    for p in theta_grid {
        p.validate()?;
    }
    let mut grid = theta_grid.to_vec();
    sort_grid(&mut grid);
    let per_theta = grid
        .par_iter()
        .map(|&p| eval_one(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(select(per_theta, mode))
}

/// True-cost outcome of the rule `params` when the untrusted vehicles
/// best-respond to it.
pub fn self_interested_objective(
    scenario: &Scenario,
    params: RuleParams,
    br: &BestResponseConfig,
) -> Result<ThetaEval> {
    let fp = iterated_best_response(scenario, params, br)?;
    Ok(ThetaEval {
        params,
        objective: true_system_cost(scenario, params, &fp.deltas.delta),
        converged: fp.converged,
    })
}

/// Robust tuning against self-interested misreporting.
pub fn tune_self_interested(
    scenario: &Scenario,
    theta_grid: &[RuleParams],
    br: &BestResponseConfig,
    eval: EvalTarget,
) -> Result<TuneResult> {
    let scoring = scoring_scenario(scenario, eval);
    evaluate_grid(theta_grid, TuneMode::SelfInterested, |p| {
        self_interested_objective(&scoring, p, br)
    })
}

/// Min-max tuning against malicious spoofing.
pub fn tune_malicious(
    scenario: &Scenario,
    theta_grid: &[RuleParams],
    attack: &AttackConfig,
    eval: EvalTarget,
) -> Result<TuneResult> {
    let scoring = scoring_scenario(scenario, eval);
    evaluate_grid(theta_grid, TuneMode::Malicious, |p| {
        let wc = worst_case_deviation(&scoring, p, attack)?;
        Ok(ThetaEval {
            params: p,
            objective: wc.worst_cost,
            converged: true,
        })
    })
}
