//! Command-line front end: configuration loading, the four workflows, and
//! deterministic CSV/JSON emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::coeffs::{sinusoidal_horizon, ClosedFormAgreement, CoefficientSet, Primitives};
use crate::error::{Error, Result};
use crate::euler::{euler_exit, EulerConfig, EulerExit};
use crate::gclass::{GCoefficientSet, GExitProblem};
use crate::harness::{
    cdf_sandwich_check, derive_seed, empirical_cdf, histogram, ks_critical, ks_distance, quantile_grid, sample_many,
    steps_vs_logeps, Binning, BoundParams, HistogramBin, McReport, SandwichReport, StepsFit, StepsRow,
    DEFAULT_SANDWICH_RHO,
};
use crate::spheroid::Side;
use crate::woms::{ExitProblem, ExitSample, DEFAULT_EPS, DEFAULT_GAMMA};

pub const PRESETS: [&str; 5] = ["bm", "constant", "ou", "sinusoidal", "growth"];

/// Points on the CDF grids written to reports.
pub const CDF_POINTS: usize = 512;
/// Level of the two-sample KS tolerance used by `compare`.
pub const KS_LEVEL: f64 = 0.001;

const WALK_STREAM: u64 = 0x574f_4d53;
const EULER_STREAM: u64 = 0x4555_4c52;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EulerSection {
    pub h: f64,
    pub bridge: bool,
    pub cap: f64,
    /// Optional interval and start; when given they must match the walk's.
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub x0: Option<f64>,
}

impl Default for EulerSection {
    fn default() -> Self {
        let d = EulerConfig::default();
        Self { h: d.h, bridge: d.bridge_correction, cap: d.t_cap, a: None, b: None, x0: None }
    }
}

impl EulerSection {
    pub fn config(&self) -> EulerConfig {
        EulerConfig { h: self.h, bridge_correction: self.bridge, t_cap: self.cap }
    }
}

/// Everything a command needs. Loaded from JSON, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    /// `constant`: α₀, β₀, σ₀. `growth`: α̃, β̃, σ̃.
    pub alpha0: f64,
    pub beta0: f64,
    pub sigma0: f64,
    /// `ou`: reversion rate and level (σ₀ is the noise).
    pub k: f64,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub t0: f64,
    pub eps: f64,
    pub gamma: f64,
    pub m: Option<f64>,
    pub n: usize,
    pub seed: u64,
    pub tmax: Option<f64>,
    pub out_dir: PathBuf,
    pub eps_list: Vec<f64>,
    pub euler: EulerSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: "bm".into(),
            alpha0: 0.0,
            beta0: 0.0,
            sigma0: 1.0,
            k: 1.0,
            mu: 0.0,
            a: -1.0,
            b: 1.0,
            x0: 0.0,
            t0: 0.0,
            eps: DEFAULT_EPS,
            gamma: DEFAULT_GAMMA,
            m: None,
            n: 1000,
            seed: 0,
            tmax: None,
            out_dir: PathBuf::from("out"),
            eps_list: Vec::new(),
            euler: EulerSection::default(),
        }
    }
}

/// Coefficients selected by a preset.
#[derive(Debug, Clone)]
pub enum Model {
    Linear(CoefficientSet),
    Growth(GCoefficientSet),
}

/// A configured exit problem, linear or growth.
#[derive(Debug, Clone)]
pub enum Problem {
    Linear(ExitProblem),
    Growth(GExitProblem),
}

impl Problem {
    /// The linear problem actually walked (log space for growth).
    pub fn linear(&self) -> &ExitProblem {
        match self {
            Problem::Linear(p) => p,
            Problem::Growth(g) => g.linear(),
        }
    }

    pub fn run_sample<R: rand::Rng + ?Sized>(&self, tmax: Option<f64>, rng: &mut R) -> Result<ExitSample> {
        match (self, tmax) {
            (Problem::Linear(p), None) => p.run_sample(rng),
            (Problem::Linear(p), Some(t)) => p.run_capped_sample(t, rng),
            (Problem::Growth(g), None) => g.run_sample(rng),
            (Problem::Growth(g), Some(t)) => g.run_capped_sample(t, rng),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn model(&self) -> Result<Model> {
        Ok(match self.preset.as_str() {
            "bm" => Model::Linear(CoefficientSet::brownian()),
            "constant" => Model::Linear(CoefficientSet::constant(self.alpha0, self.beta0, self.sigma0)?),
            "ou" => Model::Linear(CoefficientSet::ornstein_uhlenbeck(self.k, self.mu, self.sigma0)?),
            "sinusoidal" => Model::Linear(CoefficientSet::sinusoidal()),
            "growth" => Model::Growth(GCoefficientSet::constant(self.alpha0, self.beta0, self.sigma0)?),
            other => {
                return Err(config_err(format!("unknown preset '{other}'; expected one of {}", PRESETS.join(", "))))
            }
        })
    }

    pub fn problem(&self) -> Result<Problem> {
        if self.n == 0 {
            return Err(config_err("--n must be at least 1"));
        }
        self.euler.config().validate()?;
        let problem = match self.model()? {
            Model::Linear(cs) => {
                let p = ExitProblem::new(cs, self.a, self.b, self.x0)?
                    .with_t0(self.t0)?
                    .with_eps(self.eps)?
                    .with_gamma(self.gamma)?;
                Problem::Linear(match self.m {
                    Some(m) => p.with_m(m)?,
                    None => p,
                })
            }
            Model::Growth(g) => {
                if !(self.a > 0.0 && self.a < self.x0 && self.x0 < self.b) {
                    return Err(config_err(format!(
                        "growth preset needs 0 < a < x0 < b, got a = {}, x0 = {}, b = {}",
                        self.a, self.x0, self.b
                    )));
                }
                let p = GExitProblem::new(&g, self.a, self.b, self.x0, self.eps)
                    .map_err(|e| config_err(e.to_string()))?
                    .with_t0(self.t0)?
                    .with_gamma(self.gamma)?;
                Problem::Growth(match self.m {
                    Some(m) => p.with_m(m)?,
                    None => p,
                })
            }
        };
        if let Some(t) = self.tmax {
            if !(t > self.t0) {
                return Err(config_err(format!("--tmax {t} must exceed the start time {}", self.t0)));
            }
        }
        Ok(problem)
    }

    /// Rejects an Euler sub-config whose interval or start differs from the walk's.
    pub fn check_euler_matches(&self) -> Result<()> {
        let e = &self.euler;
        for (name, sub, main) in [("a", e.a, self.a), ("b", e.b, self.b), ("x0", e.x0, self.x0)] {
            if let Some(v) = sub {
                if v != main {
                    return Err(config_err(format!("euler.{name} = {v} does not match {name} = {main}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "exitwalk",
    version,
    about = "Exit times of one-dimensional diffusions by walking on moving spheroids"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample exits and write samples CSV plus a JSON report.
    Sample(CommonArgs),
    /// Mean step counts against |log ε|.
    Steps {
        #[command(flatten)]
        common: CommonArgs,
        /// Decreasing shell widths, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        eps_list: Option<Vec<f64>>,
    },
    /// Compare the walk with the Euler reference sampler.
    Compare(CommonArgs),
    /// The sinusoidal example: histogram, step counts and closed-form checks.
    DemoSinusoidal(DemoArgs),
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// bm, constant, ou, sinusoidal or growth.
    #[arg(long)]
    pub preset: Option<String>,
    /// Constant α (growth: α̃).
    #[arg(long, allow_negative_numbers = true)]
    pub alpha0: Option<f64>,
    /// Constant β (growth: β̃).
    #[arg(long, allow_negative_numbers = true)]
    pub beta0: Option<f64>,
    /// Constant σ (growth: σ̃).
    #[arg(long, allow_negative_numbers = true)]
    pub sigma0: Option<f64>,
    /// OU mean-reversion rate.
    #[arg(long, allow_negative_numbers = true)]
    pub k: Option<f64>,
    /// OU long-run mean.
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// Lower barrier.
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    /// Upper barrier.
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    /// Start position.
    #[arg(long, allow_negative_numbers = true)]
    pub x0: Option<f64>,
    /// Start time.
    #[arg(long, allow_negative_numbers = true)]
    pub t0: Option<f64>,
    /// Shell width ε (growth: in the original scale).
    #[arg(long, allow_negative_numbers = true)]
    pub eps: Option<f64>,
    /// Shell sampling parameter.
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Horizon step; defaults per preset.
    #[arg(long, allow_negative_numbers = true)]
    pub m: Option<f64>,
    /// Number of walks.
    #[arg(long)]
    pub n: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Euler step.
    #[arg(long, allow_negative_numbers = true)]
    pub euler_h: Option<f64>,
    /// Brownian-bridge crossing correction in the Euler sampler.
    #[arg(long)]
    pub euler_bridge: Option<bool>,
    /// Euler time cap.
    #[arg(long, allow_negative_numbers = true)]
    pub euler_cap: Option<f64>,
    /// Observe the walk only up to this time (censoring later exits).
    #[arg(long, allow_negative_numbers = true)]
    pub tmax: Option<f64>,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { $field = v; })*
            };
        }
        set!(
            preset => cfg.preset, alpha0 => cfg.alpha0, beta0 => cfg.beta0, sigma0 => cfg.sigma0,
            k => cfg.k, mu => cfg.mu, a => cfg.a, b => cfg.b, x0 => cfg.x0, t0 => cfg.t0,
            eps => cfg.eps, gamma => cfg.gamma, n => cfg.n, seed => cfg.seed, out_dir => cfg.out_dir,
            euler_h => cfg.euler.h, euler_bridge => cfg.euler.bridge, euler_cap => cfg.euler.cap,
        );
        if self.m.is_some() {
            cfg.m = self.m;
        }
        if self.tmax.is_some() {
            cfg.tmax = self.tmax;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Walks for the histogram.
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    /// Walks per shell width for the step-count table.
    #[arg(long, default_value_t = 10_000)]
    pub steps_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "demo")]
    pub out_dir: PathBuf,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample(args) => cmd_sample(&args.resolve()?).map(drop),
        Command::Steps { common, eps_list } => {
            let mut cfg = common.resolve()?;
            if let Some(list) = eps_list {
                cfg.eps_list = list;
            }
            cmd_steps(&cfg).map(drop)
        }
        Command::Compare(args) => cmd_compare(&args.resolve()?).map(drop),
        Command::DemoSinusoidal(args) => cmd_demo_sinusoidal(&args).map(drop),
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub const SAMPLES_HEADER: &str = "index,exit_time,exit_position,side,steps";

pub fn samples_csv(samples: &[ExitSample]) -> String {
    let mut out = String::with_capacity(64 * samples.len() + 64);
    out.push_str(SAMPLES_HEADER);
    out.push('\n');
    for (i, s) in samples.iter().enumerate() {
        let side = s.side.map_or("censored", Side::as_str);
        let _ = writeln!(out, "{i},{},{},{side},{}", fmt_f64(s.time), fmt_f64(s.position), s.steps);
    }
    out
}

pub fn cdf_csv(cdf: &[(f64, f64)]) -> String {
    let mut out = String::from("t,cdf\n");
    for &(t, f) in cdf {
        let _ = writeln!(out, "{},{}", fmt_f64(t), fmt_f64(f));
    }
    out
}

pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for b in bins {
        let _ = writeln!(out, "{},{},{}", fmt_f64(b.lo), fmt_f64(b.hi), b.count);
    }
    out
}

pub fn steps_csv(rows: &[StepsRow]) -> String {
    let mut out = String::from("eps,abs_log_eps,n,mean_steps,se_steps\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(r.eps),
            fmt_f64(r.abs_log_eps),
            r.n,
            fmt_f64(r.mean_steps),
            fmt_f64(r.se_steps)
        );
    }
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(dir, name, &text)
}

fn problem_json(problem: &Problem) -> serde_json::Value {
    let p = problem.linear();
    let mut v = json!({
        "coefficients": p.coefficients().name(),
        "a": p.a(), "b": p.b(), "x0": p.x0(), "t0": p.t0(),
        "eps": p.eps(), "gamma": p.gamma_shell(), "m": p.m(),
    });
    if let Problem::Growth(g) = problem {
        v["log_space"] = json!(true);
        v["eps_g"] = json!(g.eps_g());
    }
    v
}

fn sample_walks(problem: &Problem, cfg: &RunConfig, seed: u64, n: usize) -> Result<Vec<ExitSample>> {
    sample_many(n, seed, |rng| problem.run_sample(cfg.tmax, rng))
}

/// Writes `samples.csv` and `report.json`; returns the report.
pub fn cmd_sample(cfg: &RunConfig) -> Result<McReport> {
    let problem = cfg.problem()?;
    let samples = sample_walks(&problem, cfg, cfg.seed, cfg.n)?;
    let mut report = McReport::from_samples(&samples, CDF_POINTS)?;
    let grid: Vec<f64> = report.cdf.iter().map(|p| p.0).collect();
    report.bound_params =
        Some(BoundParams::from_coefficients(problem.linear().coefficients(), &grid, DEFAULT_SANDWICH_RHO));
    write_file(&cfg.out_dir, "samples.csv", &samples_csv(&samples))?;
    write_json(
        &cfg.out_dir,
        "report.json",
        &json!({ "command": "sample", "config": cfg, "problem": problem_json(&problem), "report": report }),
    )?;
    Ok(report)
}

/// Writes `steps.csv` and `steps_fit.json`; returns the fit.
pub fn cmd_steps(cfg: &RunConfig) -> Result<StepsFit> {
    if cfg.eps_list.is_empty() {
        return Err(config_err("steps needs a non-empty --eps-list"));
    }
    let problem = cfg.problem()?;
    let scale = match &problem {
        Problem::Linear(_) => 1.0,
        Problem::Growth(_) => 1.0 / cfg.b,
    };
    let list: Vec<f64> = cfg.eps_list.iter().map(|e| e * scale).collect();
    let fit = steps_vs_logeps(problem.linear(), &list, cfg.n, cfg.seed)?;
    write_file(&cfg.out_dir, "steps.csv", &steps_csv(&fit.rows))?;
    write_json(
        &cfg.out_dir,
        "steps_fit.json",
        &json!({ "command": "steps", "config": cfg, "problem": problem_json(&problem), "fit": fit }),
    )?;
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideSummary {
    pub mean_time: f64,
    pub se_time: f64,
    pub upper_frequency: f64,
    pub censored_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n: usize,
    pub walk: SideSummary,
    pub oracle: SideSummary,
    pub ks_distance: f64,
    pub ks_critical: f64,
    pub sandwich: SandwichReport,
}

fn summarize(times: &[f64], upper: usize, censored: usize) -> SideSummary {
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = if times.len() > 1 { times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    SideSummary {
        mean_time: mean,
        se_time: (var / n).sqrt(),
        upper_frequency: upper as f64 / n,
        censored_fraction: censored as f64 / n,
    }
}

/// Runs the walk and the Euler sampler on split seeds; writes
/// `compare.json`, `cdf_walk.csv` and `cdf_oracle.csv`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Comparison> {
    cfg.check_euler_matches()?;
    let problem = cfg.problem()?;
    let lp = problem.linear();
    let ecfg = cfg.euler.config();
    let walks = sample_walks(&problem, cfg, derive_seed(cfg.seed, WALK_STREAM), cfg.n)?;
    let oracle: Vec<EulerExit> = sample_many(cfg.n, derive_seed(cfg.seed, EULER_STREAM), |rng| {
        euler_exit(lp.coefficients(), lp.a(), lp.b(), lp.t0(), lp.x0(), &ecfg, rng)
    })?;
    let walk_times: Vec<f64> = walks.iter().map(|s| s.time).collect();
    let oracle_times: Vec<f64> = oracle.iter().map(|e| e.time).collect();
    let pooled: Vec<f64> = walk_times.iter().chain(&oracle_times).copied().collect();
    let grid = quantile_grid(&pooled, CDF_POINTS);
    let ks_tol = ks_critical(KS_LEVEL, cfg.n, cfg.n);
    let params = BoundParams::from_coefficients(lp.coefficients(), &grid, DEFAULT_SANDWICH_RHO);
    let sandwich = cdf_sandwich_check(&walk_times, &oracle_times, lp.eps(), &params, &grid, ks_tol)?;
    let cmp = Comparison {
        n: cfg.n,
        walk: summarize(
            &walk_times,
            walks.iter().filter(|s| s.side == Some(Side::Upper)).count(),
            walks.iter().filter(|s| s.censored).count(),
        ),
        oracle: summarize(
            &oracle_times,
            oracle.iter().filter(|e| e.side == Some(Side::Upper)).count(),
            oracle.iter().filter(|e| e.censored).count(),
        ),
        ks_distance: ks_distance(&walk_times, &oracle_times),
        ks_critical: ks_tol,
        sandwich,
    };
    write_file(&cfg.out_dir, "cdf_walk.csv", &cdf_csv(&empirical_cdf(&walk_times, &grid)))?;
    write_file(&cfg.out_dir, "cdf_oracle.csv", &cdf_csv(&empirical_cdf(&oracle_times, &grid)))?;
    write_json(
        &cfg.out_dir,
        "compare.json",
        &json!({ "command": "compare", "config": cfg, "problem": problem_json(&problem), "comparison": cmp }),
    )?;
    Ok(cmp)
}

pub const DEMO_A: f64 = -1.0;
pub const DEMO_B: f64 = 2.0;
pub const DEMO_X0: f64 = 1.0;
pub const DEMO_EPS: f64 = 1e-2;
pub const DEMO_GAMMA: f64 = 1e-4;
pub const DEMO_EPS_LIST: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
/// Tolerance of the closed-form checks run before sampling.
pub const DEMO_CHECK_TOL: f64 = 1e-8;

/// Explicit spheroid of the sinusoidal preset started at `(t0, x0)`:
/// `((2+sin(t+t0))/2)(±ψ(4t) + 2 log r) + r x0` with
/// `r = (2+sin(t+t0))/(2+sin t0)`.
pub fn sinusoidal_front(t: f64, t0: f64, x0: f64, d: f64) -> Result<(f64, f64)> {
    let (_, up) = crate::spheroid::Spheroid::new(d)?.psi((4.0 * t).min(d * d))?;
    let s = 2.0 + (t + t0).sin();
    let r = s / (2.0 + t0.sin());
    let shift = 2.0 * r.ln();
    Ok((s / 2.0 * (-up + shift) + r * x0, s / 2.0 * (up + shift) + r * x0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoChecks {
    pub closed_forms: ClosedFormAgreement,
    pub frontier_max_error: f64,
    pub closed_forms_ok: bool,
    pub frontier_ok: bool,
    pub positions_in_shell: bool,
    pub times_positive: bool,
}

impl DemoChecks {
    pub fn all_ok(&self) -> bool {
        self.closed_forms_ok && self.frontier_ok && self.positions_in_shell && self.times_positive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoOutcome {
    pub m: f64,
    pub delta_m: f64,
    pub checks: DemoChecks,
    pub report: McReport,
    pub steps: StepsFit,
}

/// Largest absolute gap between the generic spheroid boundary computed by
/// quadrature and [`sinusoidal_front`] over a `k³` grid of `(t, t0, x0)`.
pub fn sinusoidal_frontier_error(k: usize) -> Result<f64> {
    let generic = ExitProblem::new(CoefficientSet::sinusoidal().without_closed_forms(), DEMO_A, DEMO_B, DEMO_X0)?;
    let d = 1.0;
    let mut worst: f64 = 0.0;
    for i in 0..k {
        let t0 = 6.0 * i as f64 / (k - 1).max(1) as f64;
        let support = generic.spheroid_support(t0, d)?;
        for j in 0..k {
            let x0 = DEMO_A + (DEMO_B - DEMO_A) * j as f64 / (k - 1).max(1) as f64;
            for l in 0..k {
                let t = support * l as f64 / (k - 1).max(1) as f64;
                let (lo, up) = generic.psi_l(t, t0, x0, d)?;
                let (elo, eup) = sinusoidal_front(t, t0, x0, d)?;
                worst = worst.max((lo - elo).abs()).max((up - eup).abs());
            }
        }
    }
    Ok(worst)
}

/// The sinusoidal example on `[-1, 2]` from `1`: writes `demo_samples.csv`,
/// `demo_histogram.csv`, `demo_steps.csv` and `demo_report.json`, and fails
/// with a numeric error if any internal check fails.
pub fn cmd_demo_sinusoidal(args: &DemoArgs) -> Result<DemoOutcome> {
    if args.n == 0 || args.steps_n == 0 {
        return Err(config_err("demo sample counts must be at least 1"));
    }
    let cs = CoefficientSet::sinusoidal();
    let closed_forms = cs.closed_form_agreement(20.0, 400)?;
    let frontier_max_error = sinusoidal_frontier_error(10)?;

    let problem = ExitProblem::new(cs, DEMO_A, DEMO_B, DEMO_X0)?.with_eps(DEMO_EPS)?.with_gamma(DEMO_GAMMA)?;
    let m = problem.m();
    let delta_m = problem.delta_m_at(&Primitives::ORIGIN, DEMO_X0)?;
    let samples = sample_many(args.n, args.seed, |rng| problem.run_sample(rng))?;
    let report = McReport {
        histogram: histogram(&samples.iter().map(|s| s.time).collect::<Vec<_>>(), Binning::FreedmanDiaconis),
        ..McReport::from_samples(&samples, CDF_POINTS)?
    };
    let steps = steps_vs_logeps(&problem, &DEMO_EPS_LIST, args.steps_n, derive_seed(args.seed, 1))?;

    let checks = DemoChecks {
        closed_forms_ok: closed_forms.worst() <= DEMO_CHECK_TOL
            && closed_forms.rho_increasing
            && closed_forms.rho_zero_at_origin,
        frontier_ok: frontier_max_error <= DEMO_CHECK_TOL,
        closed_forms,
        frontier_max_error,
        positions_in_shell: samples.iter().all(|s| {
            (DEMO_A <= s.position && s.position <= DEMO_A + DEMO_EPS)
                || (DEMO_B - DEMO_EPS <= s.position && s.position <= DEMO_B)
        }),
        times_positive: samples.iter().all(|s| s.time > 0.0),
    };
    let out = DemoOutcome { m, delta_m, checks, report, steps };

    let dir = &args.out_dir;
    write_file(dir, "demo_samples.csv", &samples_csv(&samples))?;
    write_file(dir, "demo_histogram.csv", &histogram_csv(&out.report.histogram))?;
    write_file(dir, "demo_steps.csv", &steps_csv(&out.steps.rows))?;
    write_json(
        dir,
        "demo_report.json",
        &json!({
            "command": "demo-sinusoidal",
            "settings": {
                "a": DEMO_A, "b": DEMO_B, "x0": DEMO_X0, "eps": DEMO_EPS, "gamma": DEMO_GAMMA,
                "n": args.n, "steps_n": args.steps_n, "seed": args.seed, "eps_list": DEMO_EPS_LIST,
            },
            "m": out.m,
            "m_formula": sinusoidal_horizon(DEMO_A, DEMO_B),
            "delta_m": out.delta_m,
            "checks": out.checks,
            "report": out.report,
            "steps": out.steps,
        }),
    )?;
    if !out.checks.all_ok() {
        return Err(Error::domain(format!("demo checks failed: {:?}", out.checks)));
    }
    Ok(out)
}
