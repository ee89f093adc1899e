//! The parameterized sequencing rule: admissibility screening against
//! surveillance, and the transformation of reports into effective ETAs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{ReportVector, Scenario};
use crate::schedule::{solve_schedule, Schedule};

/// Slack on the admissibility interval so exact-boundary reports don't flap.
pub const ADMISSIBLE_TOL: f64 = 1e-12;

/// Rule parameters applied to untrusted vehicles.
///
/// `w` blends the (clamped) report toward the surveillance ETA: 0 uses the
/// report, 1 uses surveillance. `kappa` shrinks the admissible interval to
/// `surv_tau ± kappa * epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleParams {
    pub w: f64,
    pub kappa: f64,
}

impl RuleParams {
    /// Baseline rule: reports used as given.
    pub const BASELINE: RuleParams = RuleParams { w: 0.0, kappa: 1.0 };

    pub fn new(w: f64, kappa: f64) -> Result<Self> {
        let p = RuleParams { w, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.w) || !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::invalid(format!(
                "rule parameters must lie in [0, 1], got w={} kappa={}",
                self.w, self.kappa
            )));
        }
        Ok(())
    }

    pub fn is_baseline(&self) -> bool {
        *self == Self::BASELINE
    }
}

impl Default for RuleParams {
    fn default() -> Self {
        Self::BASELINE
    }
}

pub fn admissible(report: f64, surv_tau: f64, epsilon: f64) -> bool {
    (report - surv_tau).abs() <= epsilon + ADMISSIBLE_TOL
}

/// Effective ETA of one untrusted vehicle.
///
/// The blend is written so that `w = 0` returns the clamped report, `w = 1`
/// returns `surv_tau`, and a report equal to `surv_tau` passes through
/// unchanged, all bit-exactly.
pub fn effective_eta(report: f64, surv_tau: f64, epsilon: f64, params: RuleParams) -> f64 {
    let half = params.kappa * epsilon;
    let clamped = report.clamp(surv_tau - half, surv_tau + half);
    if params.w == 0.0 || clamped == surv_tau {
        clamped
    } else if params.w == 1.0 {
        surv_tau
    } else {
        clamped + params.w * (surv_tau - clamped)
    }
}

/// ETAs fed to the scheduler: trusted reports unchanged, untrusted reports
/// clamped to the shrunken interval and blended toward surveillance.
pub fn effective_etas(reports: &ReportVector, scenario: &Scenario, params: RuleParams) -> Vec<f64> {
    scenario
        .vehicles
        .iter()
        .zip(&reports.tau_hat)
        .map(|(v, &r)| {
            if v.untrusted {
                effective_eta(r, v.surv_tau, v.epsilon, params)
            } else {
                r
            }
        })
        .collect()
}

/// Per-vehicle admissibility of the reports against surveillance.
pub fn admissibility(reports: &ReportVector, scenario: &Scenario) -> Vec<bool> {
    scenario
        .vehicles
        .iter()
        .zip(&reports.tau_hat)
        .map(|(v, &r)| admissible(r, v.surv_tau, v.epsilon))
        .collect()
}

/// The full rule: effective ETAs, then the nominal solver.
pub fn apply_rule(
    reports: &ReportVector,
    scenario: &Scenario,
    params: RuleParams,
) -> Result<Schedule> {
    if reports.tau_hat.len() != scenario.n() {
        return Err(Error::invalid(format!(
            "report vector has {} entries, scenario has {} vehicles",
            reports.tau_hat.len(),
            scenario.n()
        )));
    }
    solve_schedule(&effective_etas(reports, scenario, params), scenario.s_min)
}
