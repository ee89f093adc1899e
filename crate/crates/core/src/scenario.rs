//! World model: vehicles with true and surveillance ETAs, uncertainty
//! half-widths and the untrusted set, plus generation and file I/O.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on interval-membership checks for deviations.
pub const DEVIATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    /// 1-based, unique within a scenario.
    pub id: usize,
    /// True ETA (seconds).
    pub tau: f64,
    /// Surveillance-inferred ETA (seconds).
    pub surv_tau: f64,
    /// Half-width of the arrival-time uncertainty interval (seconds).
    pub epsilon: f64,
    /// Membership in the untrusted set.
    pub untrusted: bool,
}

/// Ground truth for one sequencing instance. Vehicles are stored in id
/// order, so `vehicles[i]` has id `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub s_min: f64,
    pub sigma: f64,
    pub seed: u64,
    pub vehicles: Vec<Vehicle>,
}

/// Parameters of [`generate_scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub n: usize,
    pub horizon: f64,
    pub s_min: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub m_size: usize,
    pub seed: u64,
}

/// Draws a random scenario.
///
/// True ETAs are i.i.d. uniform on `[0, horizon]` and relabeled so ids ascend
/// with ETA. Surveillance ETAs add bounded uniform noise on `[-sigma, sigma]`.
/// The untrusted set is the first `m_size` ids of a uniform shuffle, so sets
/// are nested in `m_size` for a fixed seed.
pub fn generate_scenario(p: &GenParams) -> Result<Scenario> {
    if p.n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(p.horizon > 0.0) || !p.horizon.is_finite() {
        return Err(Error::invalid(format!(
            "horizon must be positive, got {}",
            p.horizon
        )));
    }
    if !(p.s_min >= 0.0) || !p.s_min.is_finite() {
        return Err(Error::invalid(format!(
            "s_min must be non-negative, got {}",
            p.s_min
        )));
    }
    if !(p.sigma >= 0.0) || !(p.epsilon >= 0.0) || !p.epsilon.is_finite() {
        return Err(Error::invalid("sigma and epsilon must be non-negative"));
    }
    if p.sigma > p.epsilon {
        return Err(Error::invalid(format!(
            "sigma ({}) must not exceed epsilon ({})",
            p.sigma, p.epsilon
        )));
    }
    if p.m_size > p.n {
        return Err(Error::invalid(format!(
            "m_size ({}) exceeds n ({})",
            p.m_size, p.n
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut taus: Vec<f64> = (0..p.n).map(|_| p.horizon * rng.gen::<f64>()).collect();
    // Stable sort keeps draw order on exact ties.
    taus.sort_by(|a, b| a.total_cmp(b));

    // Noise is drawn even when sigma = 0 so the stream stays aligned across sigma values.
    let noise: Vec<f64> = (0..p.n)
        .map(|_| p.sigma * (2.0 * rng.gen::<f64>() - 1.0))
        .collect();

    let mut ids: Vec<usize> = (1..=p.n).collect();
    ids.shuffle(&mut rng);
    let mut untrusted = vec![false; p.n];
    for &id in &ids[..p.m_size] {
        untrusted[id - 1] = true;
    }

    let vehicles = taus
        .iter()
        .zip(&noise)
        .enumerate()
        .map(|(k, (&tau, &e))| Vehicle {
            id: k + 1,
            tau,
            surv_tau: tau + e,
            epsilon: p.epsilon,
            untrusted: untrusted[k],
        })
        .collect();

    Ok(Scenario {
        s_min: p.s_min,
        sigma: p.sigma,
        seed: p.seed,
        vehicles,
    })
}

/// Parses and validates a scenario file. Vehicles may appear in any order.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let mut s: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    s.vehicles.sort_by_key(|v| v.id);
    s.validate()?;
    Ok(s)
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.vehicles.len()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.vehicles.iter().map(|v| v.tau).collect()
    }

    pub fn surv_taus(&self) -> Vec<f64> {
        self.vehicles.iter().map(|v| v.surv_tau).collect()
    }

    /// Ids of untrusted vehicles, ascending.
    pub fn untrusted_ids(&self) -> Vec<usize> {
        self.vehicles
            .iter()
            .filter(|v| v.untrusted)
            .map(|v| v.id)
            .collect()
    }

    pub fn vehicle(&self, id: usize) -> Option<&Vehicle> {
        id.checked_sub(1).and_then(|k| self.vehicles.get(k))
    }

    /// Checks every type invariant. Expects vehicles sorted by id.
    pub fn validate(&self) -> Result<()> {
        if self.vehicles.is_empty() {
            return Err(Error::validation("scenario has no vehicles"));
        }
        if !(self.s_min >= 0.0) || !self.s_min.is_finite() {
            return Err(Error::validation(format!(
                "s_min must be non-negative, got {}",
                self.s_min
            )));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::validation(format!(
                "sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        for (k, v) in self.vehicles.iter().enumerate() {
            if v.id != k + 1 {
                return Err(if k > 0 && self.vehicles[k - 1].id == v.id {
                    Error::validation(format!("duplicate vehicle id {}", v.id))
                } else {
                    Error::validation(format!("vehicle ids must be exactly 1..={}", self.n()))
                });
            }
            if !v.tau.is_finite() || !v.surv_tau.is_finite() {
                return Err(Error::validation(format!(
                    "vehicle {}: non-finite ETA",
                    v.id
                )));
            }
            if !(v.epsilon >= 0.0) || !v.epsilon.is_finite() {
                return Err(Error::validation(format!(
                    "vehicle {}: epsilon must be non-negative, got {}",
                    v.id, v.epsilon
                )));
            }
            if (v.surv_tau - v.tau).abs() > self.sigma + DEVIATION_TOL {
                return Err(Error::validation(format!(
                    "vehicle {}: |surv_tau - tau| exceeds sigma",
                    v.id
                )));
            }
            if v.untrusted && self.sigma > v.epsilon {
                return Err(Error::validation(format!(
                    "sigma ({}) exceeds epsilon ({}) of untrusted vehicle {}",
                    self.sigma, v.epsilon, v.id
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("scenario serializes");
        out.push('\n');
        out
    }

    /// Checks a deviation vector against this scenario and returns the reports.
    pub fn apply_deviation(&self, dev: &DeviationVector) -> Result<ReportVector> {
        dev.check(self)?;
        Ok(ReportVector {
            tau_hat: self
                .vehicles
                .iter()
                .zip(&dev.delta)
                .map(|(v, d)| v.tau + d)
                .collect(),
        })
    }

    /// Reports with every vehicle truthful.
    pub fn truthful_reports(&self) -> ReportVector {
        ReportVector {
            tau_hat: self.taus(),
        }
    }
}

/// Per-vehicle reporting deviations, seconds. Zero outside the untrusted set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationVector {
    pub delta: Vec<f64>,
}

impl DeviationVector {
    pub fn zeros(n: usize) -> Self {
        DeviationVector {
            delta: vec![0.0; n],
        }
    }

    pub fn check(&self, scenario: &Scenario) -> Result<()> {
        if self.delta.len() != scenario.n() {
            return Err(Error::invalid(format!(
                "deviation vector has {} entries, scenario has {} vehicles",
                self.delta.len(),
                scenario.n()
            )));
        }
        for (v, &d) in scenario.vehicles.iter().zip(&self.delta) {
            if !d.is_finite() {
                return Err(Error::invalid(format!(
                    "vehicle {}: non-finite deviation",
                    v.id
                )));
            }
            if !v.untrusted && d != 0.0 {
                return Err(Error::invalid(format!(
                    "vehicle {} is trusted but has deviation {}",
                    v.id, d
                )));
            }
            if d.abs() > v.epsilon + DEVIATION_TOL {
                return Err(Error::invalid(format!(
                    "vehicle {}: deviation {} outside [-{}, {}]",
                    v.id, d, v.epsilon, v.epsilon
                )));
            }
        }
        Ok(())
    }
}

/// Reported ETAs, `tau_hat[i] = tau[i] + delta[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportVector {
    pub tau_hat: Vec<f64>,
}
