//! Command-line front end for the `seqshield` binary.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 I/O error. Errors
//! print one line on stderr: `seqshield: error[<kind>]: <message>`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::adversary::{
    best_response, iterated_best_response, worst_case_deviation, AttackConfig, BestResponseConfig,
};
use crate::coordinator::{theta_grid, tune_malicious, tune_self_interested, EvalTarget};
use crate::error::{Error, Result};
use crate::experiments::{
    run_cases, run_sweep, sweep_cells, BaseScenarioConfig, ExperimentConfig, SweepSpec,
};
use crate::report::{fmt_num, manifest_path, results_csv, write_file, CellSeed, RunManifest};
use crate::rules::{admissibility, apply_rule, RuleParams};
use crate::scenario::{generate_scenario, load_scenario, DeviationVector, GenParams, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "seqshield",
    version,
    about = "Secure vertiport arrival sequencing simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random scenario file.
    Gen(GenCmd),
    /// Schedule one scenario under a rule, optionally with deviations.
    Solve(SolveCmd),
    /// Best responses of the untrusted vehicles.
    BestResponse(BestResponseCmd),
    /// Worst-case spoofing deviation under a rule.
    WorstCase(WorstCaseCmd),
    /// Tune the rule against misreporting or spoofing.
    Tune(TuneCmd),
    /// Run the seven-case study on one scenario.
    Cases(CasesCmd),
    /// Sensitivity sweep over one scenario parameter.
    Sweep(SweepCmd),
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    /// Defaults to 10 * s_min.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long = "s-min", default_value_t = 2.0)]
    pub s_min: f64,
    /// Defaults to epsilon / 2.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    #[arg(long = "m-size", default_value_t = 1)]
    pub m_size: usize,
}

impl GenArgs {
    fn base(&self) -> BaseScenarioConfig {
        BaseScenarioConfig {
            n: self.n,
            horizon: self.horizon,
            s_min: self.s_min,
            sigma: self.sigma,
            epsilon: self.epsilon,
            m_size: self.m_size,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SeedArg {
    /// Master RNG seed.
    #[arg(long, env = "SEQSHIELD_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct RuleArgs {
    #[arg(long, requires = "kappa", conflicts_with = "theta0")]
    pub w: Option<f64>,
    #[arg(long, requires = "w", conflicts_with = "theta0")]
    pub kappa: Option<f64>,
    /// Baseline rule (w = 0, kappa = 1); the default.
    #[arg(long)]
    pub theta0: bool,
}

impl RuleArgs {
    fn params(&self) -> Result<RuleParams> {
        match (self.w, self.kappa) {
            (Some(w), Some(kappa)) => RuleParams::new(w, kappa),
            _ => Ok(RuleParams::BASELINE),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Trust-weight grid as start:stop:step or a comma list.
    #[arg(long = "w-grid", default_value = "0:1:0.1")]
    pub w_grid: String,
    /// Interval-shrink grid as a comma list.
    #[arg(long = "kappa-grid", default_value = "0.25,0.5,0.75,1")]
    pub kappa_grid: String,
    /// Best-response grid points.
    #[arg(long = "grid-points", default_value_t = 201)]
    pub grid_points: usize,
    #[arg(long = "max-iters", default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Attack grid points per untrusted vehicle.
    #[arg(long = "attack-grid-points", default_value_t = 21)]
    pub attack_grid_points: usize,
    #[arg(long = "refine-iters", default_value_t = 2)]
    pub refine_iters: usize,
    /// Score tuning against surveillance ETAs instead of true ETAs.
    #[arg(long = "eval-proxy")]
    pub eval_proxy: bool,
}

impl SearchArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        if self.max_iters == 0 {
            return Err(Error::invalid("--max-iters must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("--tol must be positive"));
        }
        if self.grid_points < 2 {
            return Err(Error::invalid("--grid-points must be at least 2"));
        }
        if self.attack_grid_points < 3 {
            return Err(Error::invalid("--attack-grid-points must be at least 3"));
        }
        let ws = if self.w_grid.contains(':') {
            parse_range(&self.w_grid)?
        } else {
            parse_list(&self.w_grid)?
        };
        let kappas = parse_list(&self.kappa_grid)?;
        Ok(ExperimentConfig {
            theta_grid: theta_grid(&ws, &kappas)?,
            best_response: BestResponseConfig {
                grid_points: self.grid_points,
                max_iters: self.max_iters,
                tol: self.tol,
            },
            attack: AttackConfig {
                grid_points_per_dim: self.attack_grid_points,
                refine_iters: self.refine_iters,
            },
            eval: if self.eval_proxy {
                EvalTarget::SurveillanceProxy
            } else {
                EvalTarget::TrueEta
            },
        })
    }
}

#[derive(Debug, Args)]
pub struct GenCmd {
    #[command(flatten)]
    pub gen: GenArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Scenario file to write; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveCmd {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Per-vehicle deviations in id order, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub deviations: Option<String>,
    #[command(flatten)]
    pub rule: RuleArgs,
    /// Fail with exit code 2 if any report is inconsistent with surveillance.
    #[arg(long = "reject-inadmissible")]
    pub reject_inadmissible: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BestResponseCmd {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Only this vehicle; all untrusted vehicles when absent.
    #[arg(long)]
    pub vehicle: Option<usize>,
    #[command(flatten)]
    pub rule: RuleArgs,
    #[arg(long = "grid-points", default_value_t = 201)]
    pub grid_points: usize,
    #[arg(long = "max-iters", default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct WorstCaseCmd {
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub rule: RuleArgs,
    /// Grid points per untrusted vehicle.
    #[arg(long = "grid-points", default_value_t = 21)]
    pub grid_points: usize,
    #[arg(long = "refine-iters", default_value_t = 2)]
    pub refine_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[value(name = "self")]
    SelfInterested,
    Malicious,
}

#[derive(Debug, Args)]
pub struct TuneCmd {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Per-theta CSV; table on stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CasesCmd {
    /// Scenario file; a scenario is generated from the flags below when absent.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[command(flatten)]
    pub gen: GenArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Comma-separated case ids (1-7).
    #[arg(long, default_value = "1,2,3,4,5,6,7")]
    pub cases: String,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepCmd {
    #[command(flatten)]
    pub gen: GenArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub param: String,
    #[arg(long)]
    pub values: String,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value = "1,2,3,4,5,6,7")]
    pub cases: String,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_f64(s: &str) -> Result<f64> {
    let t = s.trim();
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::invalid(format!("not a finite number: '{t}'")))
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    let out = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(parse_f64)
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(Error::invalid("empty list"));
    }
    Ok(out)
}

/// `start:stop:step`, inclusive of `stop` when it lies on the lattice.
/// Values are computed as `start + (stop - start) * k / m` so decimal steps
/// land on their shortest representations.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::invalid(format!(
            "expected start:stop:step, got '{s}'"
        )));
    }
    let (start, stop, step) = (
        parse_f64(parts[0])?,
        parse_f64(parts[1])?,
        parse_f64(parts[2])?,
    );
    if stop < start {
        return Err(Error::invalid(format!("range '{s}' has stop < start")));
    }
    if start == stop {
        return Ok(vec![start]);
    }
    if !(step > 0.0) {
        return Err(Error::invalid(format!("range '{s}' needs a positive step")));
    }
    let span = (stop - start) / step;
    let m = (span + 1e-9).floor();
    if m > 10_000.0 {
        return Err(Error::invalid(format!("range '{s}' has too many points")));
    }
    let m = m as usize;
    if m == 0 {
        return Ok(vec![start]);
    }
    let end = start + step * m as f64;
    Ok((0..=m)
        .map(|k| start + (end - start) * k as f64 / m as f64)
        .map(|v| if (v - stop).abs() < 1e-9 { stop } else { v })
        .collect())
}

fn parse_cases(s: &str) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.parse::<u8>() {
            Ok(c) if (1..=7).contains(&c) => out.push(c),
            _ => {
                return Err(Error::invalid(format!(
                    "invalid case id '{part}' (expected 1-7)"
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no cases selected"));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    load_scenario(&text)
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Err(Error::invalid("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn fmt_vec(xs: &[f64]) -> String {
    format!(
        "[{}]",
        xs.iter()
            .map(|&x| fmt_num(x))
            .collect::<Vec<_>>()
            .join(", ")
    )
}

/// Writes `text` to `out` (plus a manifest) or to stdout.
fn emit(text: &str, out: Option<&Path>, mut manifest: RunManifest) -> Result<()> {
    match out {
        Some(path) => {
            let digest = write_file(path, text)?;
            manifest.record_output(path, digest);
            manifest.write(&manifest_path(path))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

#[derive(Serialize)]
struct ScenarioSource<'a> {
    scenario_file: Option<&'a Path>,
    generated: Option<GenParams>,
}

fn run_gen(cmd: &GenCmd) -> Result<()> {
    let params = cmd.gen.base().resolve(cmd.seed.seed);
    let scenario = generate_scenario(&params)?;
    let manifest = RunManifest::new("gen", json!({ "generate": params }), Some(cmd.seed.seed));
    emit(&scenario.to_json(), cmd.out.as_deref(), manifest)
}

fn run_solve(cmd: &SolveCmd) -> Result<()> {
    let scenario = read_scenario(&cmd.scenario)?;
    let params = cmd.rule.params()?;
    let deltas = match &cmd.deviations {
        Some(s) => DeviationVector {
            delta: parse_list(s)?,
        },
        None => DeviationVector::zeros(scenario.n()),
    };
    let reports = scenario.apply_deviation(&deltas)?;
    let flags = admissibility(&reports, &scenario);
    if cmd.reject_inadmissible {
        if let Some(k) = flags.iter().position(|ok| !ok) {
            return Err(Error::validation(format!(
                "report of vehicle {} is inconsistent with surveillance",
                k + 1
            )));
        }
    }
    let schedule = apply_rule(&reports, &scenario, params)?;
    let cost_true: f64 = schedule
        .times
        .iter()
        .zip(&scenario.vehicles)
        .map(|(a, v)| (a - v.tau) * (a - v.tau))
        .sum();
    let cost_reported: f64 = schedule
        .times
        .iter()
        .zip(&reports.tau_hat)
        .map(|(a, r)| (a - r) * (a - r))
        .sum();
    let order = schedule
        .order
        .iter()
        .map(|id| id.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let admissible = flags
        .iter()
        .map(|f| f.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let text = format!(
        "rule: w={} kappa={}\norder: [{order}]\ntimes: {}\ncost_true: {}\ncost_reported: {}\nadmissible: [{admissible}]\n",
        fmt_num(params.w),
        fmt_num(params.kappa),
        fmt_vec(&schedule.times),
        fmt_num(cost_true),
        fmt_num(cost_reported),
    );
    let manifest = RunManifest::new(
        "solve",
        json!({ "scenario_file": cmd.scenario, "rule": params, "deviations": deltas.delta }),
        None,
    );
    emit(&text, cmd.out.as_deref(), manifest)
}

fn run_best_response(cmd: &BestResponseCmd) -> Result<()> {
    let scenario = read_scenario(&cmd.scenario)?;
    let params = cmd.rule.params()?;
    let ids = match cmd.vehicle {
        Some(id) => vec![id],
        None => scenario.untrusted_ids(),
    };
    let zeros = DeviationVector::zeros(scenario.n());
    let mut text = String::from("vehicle,delta_star,own_cost,truthful_cost,candidates\n");
    for id in ids {
        let br = best_response(&scenario, params, id, &zeros, cmd.grid_points)?;
        let truthful = apply_rule(&scenario.truthful_reports(), &scenario, params)?;
        let t = truthful.times[id - 1] - scenario.vehicles[id - 1].tau;
        text.push_str(&format!(
            "{id},{},{},{},{}\n",
            fmt_num(br.delta_star),
            fmt_num(br.own_cost),
            fmt_num(t * t),
            br.candidates_evaluated
        ));
    }
    let fp = iterated_best_response(
        &scenario,
        params,
        &BestResponseConfig {
            grid_points: cmd.grid_points,
            max_iters: cmd.max_iters,
            tol: cmd.tol,
        },
    )?;
    text.push_str(&format!(
        "# iterated: deltas={} converged={} iterations={}\n",
        fmt_vec(&fp.deltas.delta),
        fp.converged,
        fp.iterations
    ));
    print!("{text}");
    Ok(())
}

fn run_worst_case(cmd: &WorstCaseCmd) -> Result<()> {
    let scenario = read_scenario(&cmd.scenario)?;
    let params = cmd.rule.params()?;
    let wc = worst_case_deviation(
        &scenario,
        params,
        &AttackConfig {
            grid_points_per_dim: cmd.grid_points,
            refine_iters: cmd.refine_iters,
        },
    )?;
    println!("deltas: {}", fmt_vec(&wc.deltas.delta));
    println!("worst_cost: {}", fmt_num(wc.worst_cost));
    println!("evaluations: {}", wc.evaluations);
    Ok(())
}

fn run_tune(cmd: &TuneCmd) -> Result<()> {
    let scenario = read_scenario(&cmd.scenario)?;
    let cfg = cmd.search.config()?;
    let result = with_pool(cmd.jobs, || match cmd.mode {
        ModeArg::SelfInterested => {
            tune_self_interested(&scenario, &cfg.theta_grid, &cfg.best_response, cfg.eval)
        }
        ModeArg::Malicious => tune_malicious(&scenario, &cfg.theta_grid, &cfg.attack, cfg.eval),
    })??;
    let mut text = String::from("w,kappa,objective,converged\n");
    for e in &result.per_theta {
        text.push_str(&format!(
            "{},{},{},{}\n",
            fmt_num(e.params.w),
            fmt_num(e.params.kappa),
            fmt_num(e.objective),
            e.converged
        ));
    }
    eprintln!(
        "theta_star: w={} kappa={} objective={}",
        fmt_num(result.theta_star.w),
        fmt_num(result.theta_star.kappa),
        fmt_num(result.objective)
    );
    let manifest = RunManifest::new(
        "tune",
        json!({ "scenario_file": cmd.scenario, "mode": result.mode, "experiment": cfg }),
        Some(scenario.seed),
    );
    emit(&text, cmd.out.as_deref(), manifest)
}

fn run_cases_cmd(cmd: &CasesCmd) -> Result<()> {
    let cfg = cmd.search.config()?;
    let cases = parse_cases(&cmd.cases)?;
    let (scenario, source) = match &cmd.scenario {
        Some(path) => (
            read_scenario(path)?,
            ScenarioSource {
                scenario_file: Some(path),
                generated: None,
            },
        ),
        None => {
            let params = cmd.gen.base().resolve(cmd.seed.seed);
            (
                generate_scenario(&params)?,
                ScenarioSource {
                    scenario_file: None,
                    generated: Some(params),
                },
            )
        }
    };
    let rows = with_pool(cmd.jobs, || run_cases(&scenario, &cases, &cfg, 0))??;
    let mut manifest = RunManifest::new(
        "cases",
        json!({ "scenario": source, "cases": cases, "experiment": cfg, "jobs": cmd.jobs }),
        Some(scenario.seed),
    );
    manifest.cell_seeds.push(CellSeed {
        label: "rep=0".to_string(),
        seed: scenario.seed,
    });
    emit(&results_csv(&rows), cmd.out.as_deref(), manifest)
}

fn run_sweep_cmd(cmd: &SweepCmd) -> Result<()> {
    let cfg = cmd.search.config()?;
    let spec = SweepSpec {
        base: cmd.gen.base(),
        param: cmd.param.parse()?,
        values: parse_list(&cmd.values)?,
        reps: cmd.reps,
        seed: cmd.seed.seed,
        cases: parse_cases(&cmd.cases)?,
    };
    let cells = sweep_cells(&spec)?;
    let rows = with_pool(cmd.jobs, || run_sweep(&spec, &cfg))??;
    let mut manifest = RunManifest::new(
        "sweep",
        json!({ "sweep": spec, "experiment": cfg, "jobs": cmd.jobs }),
        Some(spec.seed),
    );
    manifest.cell_seeds = cells
        .iter()
        .map(|c| CellSeed {
            label: format!("{}={};rep={}", spec.param, fmt_num(c.value), c.rep),
            seed: c.seed,
        })
        .collect();
    emit(&results_csv(&rows), cmd.out.as_deref(), manifest)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(c) => run_gen(c),
        Command::Solve(c) => run_solve(c),
        Command::BestResponse(c) => run_best_response(c),
        Command::WorstCase(c) => run_worst_case(c),
        Command::Tune(c) => run_tune(c),
        Command::Cases(c) => run_cases_cmd(c),
        Command::Sweep(c) => run_sweep_cmd(c),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("seqshield: error[{}]: {msg}", e.kind());
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}
