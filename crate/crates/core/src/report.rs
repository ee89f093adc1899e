//! Result CSV and run manifest.
//!
//! The CSV column order is a stable interface for downstream plotting.
//! Numbers use Rust's shortest round-trip decimal formatting, so identical
//! runs produce identical bytes.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::CaseResult;

pub const CSV_HEADER: &str = "case,rep,seed,n,s_min,sigma,epsilon,m_size,rule_w,rule_kappa,cost_true,cost_reported,max_delay,kendall_tau,deviator_gain,bystander_harm,br_converged,inadmissible_count";

/// Shortest round-trip decimal; negative zero prints as `0`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x}")
    }
}

pub fn csv_row(r: &CaseResult) -> String {
    let m = &r.metrics;
    let d = &r.scenario;
    [
        r.case_id.to_string(),
        r.rep.to_string(),
        d.seed.to_string(),
        d.n.to_string(),
        fmt_num(d.s_min),
        fmt_num(d.sigma),
        fmt_num(d.epsilon),
        d.m_size.to_string(),
        fmt_num(r.theta.w),
        fmt_num(r.theta.kappa),
        fmt_num(m.cost_true),
        fmt_num(m.cost_reported),
        fmt_num(m.max_delay),
        m.kendall_tau.to_string(),
        fmt_num(m.deviator_gain),
        fmt_num(m.bystander_harm),
        r.br_converged.to_string(),
        r.inadmissible_count.to_string(),
    ]
    .join(",")
}

pub fn results_csv(rows: &[CaseResult]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes `contents` to `path` and returns its SHA-256.
pub fn write_file(path: &Path, contents: &str) -> Result<String> {
    fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(sha256_hex(contents.as_bytes()))
}

/// Writes the results CSV; returns the content digest.
pub fn write_results(rows: &[CaseResult], path: &Path) -> Result<String> {
    write_file(path, &results_csv(rows))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSeed {
    pub label: String,
    pub seed: u64,
}

/// Everything needed to re-run an invocation, plus digests of what it wrote.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub master_seed: Option<u64>,
    pub cell_seeds: Vec<CellSeed>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<OutputFile>,
}

pub fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, master_seed: Option<u64>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            master_seed,
            cell_seeds: Vec::new(),
            started_unix_ms: unix_ms(),
            finished_unix_ms: 0,
            outputs: Vec::new(),
        }
    }

    pub fn record_output(&mut self, path: &Path, sha256: String) {
        self.outputs.push(OutputFile {
            path: path.display().to_string(),
            sha256,
        });
    }

    /// Stamps the finish time and writes the manifest as JSON.
    pub fn write(mut self, path: &Path) -> Result<()> {
        self.finished_unix_ms = unix_ms();
        let mut text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// `<out>.manifest.json` next to the primary output.
pub fn manifest_path(out: &Path) -> std::path::PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run_cases, ExperimentConfig, ALL_CASES};
    use crate::scenario::{generate_scenario, GenParams};

    fn rows() -> Vec<CaseResult> {
        let s = generate_scenario(&GenParams {
            n: 4,
            horizon: 8.0,
            s_min: 2.0,
            sigma: 0.1,
            epsilon: 0.4,
            m_size: 1,
            seed: 3,
        })
        .unwrap();
        run_cases(&s, &ALL_CASES, &ExperimentConfig::default(), 0).unwrap()
    }

    #[test]
    fn header_only_for_no_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        let digest = write_results(&[], &path).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            format!("{CSV_HEADER}\n")
        );
        assert_eq!(digest, sha256_hex(format!("{CSV_HEADER}\n").as_bytes()));
    }

    #[test]
    fn seven_rows_in_case_order_and_stable_digest() {
        let dir = tempfile::tempdir().unwrap();
        let rows = rows();
        let a = write_results(&rows, &dir.path().join("a.csv")).unwrap();
        let b = write_results(&rows, &dir.path().join("b.csv")).unwrap();
        assert_eq!(a, b);
        let text = fs::read_to_string(dir.path().join("a.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 8);
        for (k, line) in lines[1..].iter().enumerate() {
            assert!(line.starts_with(&format!("{},", k + 1)));
            assert_eq!(line.split(',').count(), CSV_HEADER.split(',').count());
        }
    }

    #[test]
    fn numbers_round_trip() {
        for x in [4.34, -1.3, 0.1 + 0.2, 1e-12, 123456.789, -0.0] {
            let s = fmt_num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_num(-0.0), "0");
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(
            manifest_path(Path::new("out/r.csv")),
            Path::new("out/r.csv.manifest.json")
        );
    }
}
