//! The seven-case study and sensitivity sweeps.
//!
//! | case | reports            | rule                         |
//! |------|--------------------|------------------------------|
//! | 1    | truthful           | baseline                     |
//! | 2    | truthful           | tuned against misreporting   |
//! | 3    | truthful           | tuned against spoofing       |
//! | 4    | best responses     | baseline                     |
//! | 5    | best responses     | tuned against misreporting   |
//! | 6    | worst-case spoof   | baseline                     |
//! | 7    | worst-case spoof   | tuned against spoofing       |
//!
//! All cases on one scenario share the tuning runs, and every case in a sweep
//! cell reuses the same generated scenario.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    iterated_best_response, worst_case_deviation, AttackConfig, BestResponseConfig,
};
use crate::coordinator::{
    default_theta_grid, tune_malicious, tune_self_interested, EvalTarget, TuneResult,
};
use crate::error::{Error, Result};
use crate::rules::{admissibility, apply_rule, RuleParams};
use crate::scenario::{generate_scenario, DeviationVector, GenParams, Scenario};
use crate::schedule::{landing_order, solve_schedule, Schedule};

pub const ALL_CASES: [u8; 7] = [1, 2, 3, 4, 5, 6, 7];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub cost_true: f64,
    pub cost_reported: f64,
    pub per_vehicle_cost_true: Vec<f64>,
    /// `max_i (a_i - tau_i)^+`
    pub max_delay: f64,
    /// Discordant pairs between the assigned order and the true-ETA order.
    pub kendall_tau: usize,
    /// Sum over untrusted vehicles of truthful-baseline cost minus achieved cost.
    pub deviator_gain: f64,
    /// Sum over trusted vehicles of achieved cost minus truthful-baseline cost.
    pub bystander_harm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Baseline,
    SelfInterestedRobust,
    MaliciousRobust,
}

/// Parameters describing the scenario a row was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioDescriptor {
    pub n: usize,
    pub s_min: f64,
    pub sigma: f64,
    /// Largest uncertainty half-width in the scenario.
    pub epsilon: f64,
    pub m_size: usize,
    pub seed: u64,
}

impl ScenarioDescriptor {
    pub fn of(scenario: &Scenario) -> Self {
        ScenarioDescriptor {
            n: scenario.n(),
            s_min: scenario.s_min,
            sigma: scenario.sigma,
            epsilon: scenario
                .vehicles
                .iter()
                .map(|v| v.epsilon)
                .fold(0.0, f64::max),
            m_size: scenario.untrusted_ids().len(),
            seed: scenario.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub case_id: u8,
    pub rep: usize,
    pub scenario: ScenarioDescriptor,
    pub rule: RuleKind,
    pub theta: RuleParams,
    pub metrics: Metrics,
    pub br_converged: bool,
    pub inadmissible_count: usize,
}

/// Search settings shared by every case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub theta_grid: Vec<RuleParams>,
    pub best_response: BestResponseConfig,
    pub attack: AttackConfig,
    pub eval: EvalTarget,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            theta_grid: default_theta_grid(),
            best_response: BestResponseConfig::default(),
            attack: AttackConfig::default(),
            eval: EvalTarget::TrueEta,
        }
    }
}

fn discordant_pairs(order: &[usize], reference: &[usize]) -> usize {
    let mut pos = vec![0usize; order.len()];
    for (k, &id) in order.iter().enumerate() {
        pos[id - 1] = k;
    }
    let ranked: Vec<usize> = reference.iter().map(|&id| pos[id - 1]).collect();
    let mut count = 0;
    for i in 0..ranked.len() {
        for j in i + 1..ranked.len() {
            if ranked[i] > ranked[j] {
                count += 1;
            }
        }
    }
    count
}

/// Metrics of `schedule` against the true ETAs. `deltas` are the reported
/// deviations the schedule was built from.
pub fn compute_metrics(
    schedule: &Schedule,
    scenario: &Scenario,
    deltas: &DeviationVector,
) -> Result<Metrics> {
    let n = scenario.n();
    if schedule.times.len() != n || schedule.order.len() != n || deltas.delta.len() != n {
        return Err(Error::invalid(
            "schedule, scenario and deviations disagree on N",
        ));
    }
    let taus = scenario.taus();
    let baseline = solve_schedule(&taus, scenario.s_min)?;

    let per: Vec<f64> = schedule
        .times
        .iter()
        .zip(&taus)
        .map(|(a, t)| (a - t) * (a - t))
        .collect();
    let cost_reported = schedule
        .times
        .iter()
        .zip(&taus)
        .zip(&deltas.delta)
        .map(|((a, t), d)| {
            let r = t + d;
            (a - r) * (a - r)
        })
        .sum();
    let max_delay = schedule
        .times
        .iter()
        .zip(&taus)
        .map(|(a, t)| (a - t).max(0.0))
        .fold(0.0, f64::max);

    let mut deviator_gain = 0.0;
    let mut bystander_harm = 0.0;
    for (k, v) in scenario.vehicles.iter().enumerate() {
        let truthful = (baseline.times[k] - v.tau) * (baseline.times[k] - v.tau);
        if v.untrusted {
            deviator_gain += truthful - per[k];
        } else {
            bystander_harm += per[k] - truthful;
        }
    }

    Ok(Metrics {
        cost_true: per.iter().sum(),
        cost_reported,
        per_vehicle_cost_true: per,
        max_delay,
        kendall_tau: discordant_pairs(&schedule.order, &landing_order(&taus)),
        deviator_gain,
        bystander_harm,
    })
}

fn validate_cases(cases: &[u8]) -> Result<Vec<u8>> {
    let mut out = cases.to_vec();
    if let Some(bad) = out.iter().find(|c| !(1..=7).contains(*c)) {
        return Err(Error::invalid(format!("case id {bad} not in 1..=7")));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Runs the selected cases on one scenario, in ascending case order.
pub fn run_cases(
    scenario: &Scenario,
    cases: &[u8],
    cfg: &ExperimentConfig,
    rep: usize,
) -> Result<Vec<CaseResult>> {
    let cases = validate_cases(cases)?;
    let needs_self = cases.iter().any(|c| matches!(c, 2 | 5));
    let needs_mal = cases.iter().any(|c| matches!(c, 3 | 7));
    let (tuned_self, tuned_mal) = rayon::join(
        || -> Result<Option<TuneResult>> {
            needs_self
                .then(|| {
                    tune_self_interested(scenario, &cfg.theta_grid, &cfg.best_response, cfg.eval)
                })
                .transpose()
        },
        || -> Result<Option<TuneResult>> {
            needs_mal
                .then(|| tune_malicious(scenario, &cfg.theta_grid, &cfg.attack, cfg.eval))
                .transpose()
        },
    );
    let theta_self = tuned_self?.map(|t| t.theta_star);
    let theta_mal = tuned_mal?.map(|t| t.theta_star);
    let descriptor = ScenarioDescriptor::of(scenario);

    cases
        .par_iter()
        .map(|&case_id| {
            let (rule, theta) = match case_id {
                1 | 4 | 6 => (RuleKind::Baseline, RuleParams::BASELINE),
                2 | 5 => (RuleKind::SelfInterestedRobust, theta_self.expect("tuned")),
                _ => (RuleKind::MaliciousRobust, theta_mal.expect("tuned")),
            };
            let (deltas, br_converged) = match case_id {
                1..=3 => (DeviationVector::zeros(scenario.n()), true),
                4 | 5 => {
                    let fp = iterated_best_response(scenario, theta, &cfg.best_response)?;
                    (fp.deltas, fp.converged)
                }
                _ => (
                    worst_case_deviation(scenario, theta, &cfg.attack)?.deltas,
                    true,
                ),
            };
            let reports = scenario.apply_deviation(&deltas)?;
            let schedule = apply_rule(&reports, scenario, theta)?;
            Ok(CaseResult {
                case_id,
                rep,
                scenario: descriptor,
                rule,
                theta,
                metrics: compute_metrics(&schedule, scenario, &deltas)?,
                br_converged,
                inadmissible_count: admissibility(&reports, scenario)
                    .iter()
                    .filter(|ok| !**ok)
                    .count(),
            })
        })
        .collect()
}

pub fn run_case(scenario: &Scenario, case_id: u8, cfg: &ExperimentConfig) -> Result<CaseResult> {
    Ok(run_cases(scenario, &[case_id], cfg, 0)?.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    N,
    SMin,
    Sigma,
    MSize,
    Epsilon,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::N => "n",
            SweepParam::SMin => "s_min",
            SweepParam::Sigma => "sigma",
            SweepParam::MSize => "m_size",
            SweepParam::Epsilon => "epsilon",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(SweepParam::N),
            "s_min" | "s-min" => Ok(SweepParam::SMin),
            "sigma" => Ok(SweepParam::Sigma),
            "m_size" | "m-size" => Ok(SweepParam::MSize),
            "epsilon" => Ok(SweepParam::Epsilon),
            other => Err(Error::invalid(format!(
                "unknown sweep parameter '{other}' (expected n, s_min, sigma, m_size, epsilon)"
            ))),
        }
    }
}

/// Generation settings before a swept value is applied. `horizon` defaults
/// to `10 * s_min` and `sigma` to `epsilon / 2`, both resolved per cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseScenarioConfig {
    pub n: usize,
    pub horizon: Option<f64>,
    pub s_min: f64,
    pub sigma: Option<f64>,
    pub epsilon: f64,
    pub m_size: usize,
}

impl Default for BaseScenarioConfig {
    fn default() -> Self {
        BaseScenarioConfig {
            n: 6,
            horizon: None,
            s_min: 2.0,
            sigma: None,
            epsilon: 0.5,
            m_size: 1,
        }
    }
}

impl BaseScenarioConfig {
    pub fn resolve(&self, seed: u64) -> GenParams {
        GenParams {
            n: self.n,
            horizon: self.horizon.unwrap_or(10.0 * self.s_min),
            s_min: self.s_min,
            sigma: self.sigma.unwrap_or(self.epsilon / 2.0),
            epsilon: self.epsilon,
            m_size: self.m_size,
            seed,
        }
    }

    fn with_value(&self, param: SweepParam, value: f64) -> Result<Self> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::invalid(format!(
                    "{param} requires a non-negative integer, got {v}"
                )))
            }
        };
        let mut out = *self;
        match param {
            SweepParam::N => out.n = as_count(value)?,
            SweepParam::MSize => out.m_size = as_count(value)?,
            SweepParam::SMin => out.s_min = value,
            SweepParam::Sigma => out.sigma = Some(value),
            SweepParam::Epsilon => out.epsilon = value,
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: BaseScenarioConfig,
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub cases: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub value: f64,
    pub rep: usize,
    pub seed: u64,
    pub scenario: GenParams,
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// Seed for one sweep cell: the master seed XOR FNV-1a of `"param=<name>;rep=<k>"`.
/// The swept value is left out so every value of a sweep sees the same
/// random draws for a given rep.
pub fn cell_seed(master: u64, param: SweepParam, rep: usize) -> u64 {
    master ^ fnv1a64(format!("param={param};rep={rep}").as_bytes())
}

/// Cells in (value, rep) order, values in the order given.
pub fn sweep_cells(spec: &SweepSpec) -> Result<Vec<SweepCell>> {
    if spec.values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    if spec.reps == 0 {
        return Err(Error::invalid("sweep needs reps >= 1"));
    }
    let mut cells = Vec::with_capacity(spec.values.len() * spec.reps);
    for &value in &spec.values {
        let base = spec.base.with_value(spec.param, value)?;
        for rep in 0..spec.reps {
            let seed = cell_seed(spec.seed, spec.param, rep);
            cells.push(SweepCell {
                value,
                rep,
                seed,
                scenario: base.resolve(seed),
            });
        }
    }
    Ok(cells)
}

/// Runs every cell of the sweep. Rows come back in (value, rep, case) order
/// however the cells were scheduled.
pub fn run_sweep(spec: &SweepSpec, cfg: &ExperimentConfig) -> Result<Vec<CaseResult>> {
    let cells = sweep_cells(spec)?;
    let per_cell = cells
        .par_iter()
        .map(|cell| {
            let scenario = generate_scenario(&cell.scenario)?;
            run_cases(&scenario, &spec.cases, cfg, cell.rep)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Vehicle;

    fn reference() -> Scenario {
        Scenario {
            s_min: 2.0,
            sigma: 0.0,
            seed: 0,
            vehicles: [0.0, 1.0, 1.1]
                .iter()
                .enumerate()
                .map(|(k, &tau)| Vehicle {
                    id: k + 1,
                    tau,
                    surv_tau: tau,
                    epsilon: 0.5,
                    untrusted: k == 2,
                })
                .collect(),
        }
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn truthful_baseline_metrics() {
        let s = reference();
        let sched = solve_schedule(&s.taus(), s.s_min).unwrap();
        let m = compute_metrics(&sched, &s, &DeviationVector::zeros(3)).unwrap();
        assert!((m.cost_true - 4.34).abs() < 1e-12);
        assert_eq!(m.cost_true, m.cost_reported);
        assert_eq!(m.deviator_gain, 0.0);
        assert_eq!(m.bystander_harm, 0.0);
        assert_eq!(m.kendall_tau, 0);
        assert!((m.max_delay - 1.6).abs() < 1e-12);
    }

    #[test]
    fn queue_jump_metrics() {
        let s = reference();
        let deltas = DeviationVector {
            delta: vec![0.0, 0.0, -0.2],
        };
        let reports = s.apply_deviation(&deltas).unwrap();
        let sched = apply_rule(&reports, &s, RuleParams::BASELINE).unwrap();
        let m = compute_metrics(&sched, &s, &deltas).unwrap();
        // Independent SLSQP + permutation oracle: J = [1.867778, 2.667778, 0.217778].
        assert!(
            (m.deviator_gain - 2.342_222).abs() < 1e-6,
            "{}",
            m.deviator_gain
        );
        assert!(
            (m.bystander_harm - 2.755_556).abs() < 1e-6,
            "{}",
            m.bystander_harm
        );
        assert_eq!(m.kendall_tau, 1);
        let baseline = 4.34;
        assert!((m.cost_true - (baseline - m.deviator_gain + m.bystander_harm)).abs() < 1e-9);
        assert!((m.per_vehicle_cost_true.iter().sum::<f64>() - m.cost_true).abs() < 1e-15);
    }

    #[test]
    fn no_separation_means_no_delay() {
        let mut s = reference();
        s.s_min = 0.0;
        let sched = solve_schedule(&s.taus(), 0.0).unwrap();
        let m = compute_metrics(&sched, &s, &DeviationVector::zeros(3)).unwrap();
        assert_eq!(m.max_delay, 0.0);
        assert_eq!(m.cost_true, 0.0);
    }

    #[test]
    fn metrics_dimension_mismatch() {
        let s = reference();
        let sched = solve_schedule(&[0.0, 1.0], 2.0).unwrap();
        assert!(compute_metrics(&sched, &s, &DeviationVector::zeros(3)).is_err());
    }

    #[test]
    fn kendall_counts_discordant_pairs() {
        assert_eq!(discordant_pairs(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(discordant_pairs(&[3, 2, 1], &[1, 2, 3]), 3);
        assert_eq!(discordant_pairs(&[1, 3, 2], &[1, 2, 3]), 1);
    }

    #[test]
    fn reference_cases() {
        let s = reference();
        let rows = run_cases(&s, &ALL_CASES, &ExperimentConfig::default(), 0).unwrap();
        assert_eq!(rows.len(), 7);
        let cost = |c: u8| rows[c as usize - 1].metrics.cost_true;
        assert!((cost(1) - 4.34).abs() < 1e-12);
        assert!((cost(6) - 4.823_333_333).abs() < 1e-6);
        assert_eq!(rows[5].metrics.kendall_tau, 1);
        assert!((cost(7) - 4.34).abs() < 1e-12);
        assert!(cost(5) <= cost(4) + 1e-9);
        assert!(cost(7) <= cost(6) + 1e-9);
        assert_eq!(rows[0].metrics, rows[1].metrics);
        assert_eq!(rows[0].metrics, rows[2].metrics);
    }

    #[test]
    fn invalid_case_rejected() {
        assert!(run_case(&reference(), 8, &ExperimentConfig::default()).is_err());
        assert!(run_case(&reference(), 0, &ExperimentConfig::default()).is_err());
    }

    #[test]
    fn sweep_rejects_bad_input() {
        assert!("density".parse::<SweepParam>().is_err());
        let spec = SweepSpec {
            base: BaseScenarioConfig::default(),
            param: SweepParam::N,
            values: vec![2.5],
            reps: 1,
            seed: 1,
            cases: vec![1],
        };
        assert!(sweep_cells(&spec).is_err());
        assert!(sweep_cells(&SweepSpec {
            values: vec![],
            ..spec.clone()
        })
        .is_err());
        assert!(sweep_cells(&SweepSpec {
            values: vec![3.0],
            reps: 0,
            ..spec
        })
        .is_err());
    }

    #[test]
    fn cell_seeds_pair_values() {
        let spec = SweepSpec {
            base: BaseScenarioConfig::default(),
            param: SweepParam::Sigma,
            values: vec![0.0, 0.25],
            reps: 2,
            seed: 77,
            cases: ALL_CASES.to_vec(),
        };
        let cells = sweep_cells(&spec).unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[0].seed, cells[2].seed);
        assert_ne!(cells[0].seed, cells[1].seed);
        assert_eq!(cells[0].seed, 77 ^ fnv1a64(b"param=sigma;rep=0"));
    }
}
