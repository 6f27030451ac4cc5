//! Batch simulation with per-replica random streams, empirical statistics,
//! and two consistency checks: step-count growth in `|log ε|` and the
//! CDF sandwich between the walk and a reference sampler.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::quadrature::sup_abs_on;
use crate::spheroid::Side;
use crate::woms::{ExitProblem, ExitSample};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "EXITWALK_THREADS";

pub type ReplicaRng = ChaCha8Rng;

/// Stream for replica `i`: the seed picks the key, the replica index picks
/// the ChaCha stream, so replicas never overlap and do not depend on
/// scheduling.
pub fn replica_rng(seed: u64, replica: u64) -> ReplicaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Derives an independent seed for a named sub-experiment (splitmix64).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse::<usize>().ok().filter(|&n| n > 0)
}

/// Runs `runner` once per replica `0..n`, each on its own stream, and
/// returns the outputs in replica order.
pub fn sample_many<T, F>(n: usize, seed: u64, runner: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ReplicaRng) -> Result<T> + Sync,
{
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let work =
        || -> Result<Vec<T>> { (0..n as u64).into_par_iter().map(|i| runner(&mut replica_rng(seed, i))).collect() };
    match thread_cap() {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// `(t, F̂(t))` with `F̂(t)` the fraction of `times` at or below `t`.
pub fn empirical_cdf(times: &[f64], grid: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    grid.iter().map(|&t| (t, sorted.partition_point(|&x| x <= t) as f64 / n)).collect()
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F̂_a - F̂_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Two-sample KS critical value at level `alpha` for sizes `n` and `m`:
/// `√(-ln(α/2)/2) · √((n+m)/(nm))`.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    (-(alpha / 2.0).ln() / 2.0).sqrt() * ((n + m) / (n * m)).sqrt()
}

/// `k` points at evenly spaced quantiles of the pooled samples.
pub fn quantile_grid(pooled: &[f64], k: usize) -> Vec<f64> {
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() || k == 0 {
        return Vec::new();
    }
    let last = (sorted.len() - 1) as f64;
    (0..k)
        .map(|i| {
            let q = if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
            sorted[(q * last).round() as usize]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binning {
    FreedmanDiaconis,
    Count(usize),
    Width(f64),
}

const MAX_BINS: usize = 100_000;

/// Histogram over `[min, max]`; the last bin is closed on the right.
pub fn histogram(values: &[f64], binning: Binning) -> Vec<HistogramBin> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let span = hi - lo;
    let bins = if span == 0.0 {
        1
    } else {
        let width = match binning {
            Binning::Count(k) => span / k.max(1) as f64,
            Binning::Width(w) => w,
            Binning::FreedmanDiaconis => {
                let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
                2.0 * (q(0.75) - q(0.25)) / (sorted.len() as f64).cbrt()
            }
        };
        if width > 0.0 && width.is_finite() {
            ((span / width).ceil() as usize).clamp(1, MAX_BINS)
        } else {
            1
        }
    };
    let width = span / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in &sorted {
        let idx = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lo: lo + width * i as f64,
            hi: if i + 1 == bins { hi } else { lo + width * (i + 1) as f64 },
            count,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsRow {
    pub eps: f64,
    pub abs_log_eps: f64,
    pub n: usize,
    pub mean_steps: f64,
    pub se_steps: f64,
}

/// Per-`ε` mean step counts and their least-squares line in `|log ε|`.
/// The fit fields are `None` when the regression is degenerate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepsFit {
    pub rows: Vec<StepsRow>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r2: Option<f64>,
    pub nondecreasing: bool,
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r²)`.
pub fn affine_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx, sxy * sxy / (sxx * syy)))
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = if n > 1.0 { values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

/// Runs `n_per_eps` walks of `template` for every shell width in
/// `eps_list` (which must be decreasing) and fits mean steps against
/// `|log ε|`.
pub fn steps_vs_logeps(template: &ExitProblem, eps_list: &[f64], n_per_eps: usize, seed: u64) -> Result<StepsFit> {
    if eps_list.is_empty() {
        return Err(Error::Config("need at least one shell width".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("shell widths must be strictly decreasing".into()));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    for (k, &eps) in eps_list.iter().enumerate() {
        let problem = template.clone().with_eps(eps)?;
        let samples = sample_many(n_per_eps, derive_seed(seed, k as u64), |rng| problem.run_sample(rng))?;
        let (mean_steps, se_steps) = mean_and_se(samples.iter().map(|s| s.steps as f64));
        rows.push(StepsRow { eps, abs_log_eps: eps.ln().abs(), n: n_per_eps, mean_steps, se_steps });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.abs_log_eps).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_steps).collect();
    let fit = affine_fit(&xs, &ys);
    let nondecreasing = ys.windows(2).all(|w| w[1] >= w[0]);
    Ok(StepsFit { rows, slope: fit.map(|f| f.0), intercept: fit.map(|f| f.1), r2: fit.map(|f| f.2), nondecreasing })
}

/// Inputs of the CDF lower bound: the constant `ρ > 1`, the diffusion
/// floor, and `β̄_t = sup_{[0,t]} |β|` (with `ᾱ_t` reported alongside) at
/// every grid time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub rho: f64,
    pub sigma_floor: f64,
    pub alpha_bar: Vec<f64>,
    pub beta_bar: Vec<f64>,
}

pub const DEFAULT_SANDWICH_RHO: f64 = 1.05;

impl BoundParams {
    pub fn from_coefficients(cs: &CoefficientSet, grid: &[f64], rho: f64) -> Self {
        let sup = |f: &dyn Fn(f64) -> f64, t: f64| if t > 0.0 { sup_abs_on(f, 0.0, t) } else { f(0.0).abs() };
        let alpha = |t: f64| cs.alpha(t);
        let beta = |t: f64| cs.beta(t);
        Self {
            rho,
            sigma_floor: cs.sigma_floor(),
            alpha_bar: grid.iter().map(|&t| sup(&alpha, t)).collect(),
            beta_bar: grid.iter().map(|&t| sup(&beta, t)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub eps: f64,
    pub ks_tol: f64,
    pub rho: f64,
    pub grid_points: usize,
    /// Grid points where `F̂_oracle(t) > F̂_walk(t) + ks_tol`.
    pub upper_violations: usize,
    /// Grid points where the prefactored lower bound exceeds `F̂_oracle(t) + ks_tol`.
    pub lower_violations: usize,
    /// Grid points where the prefactor is non-positive, making the lower bound vacuous.
    pub vacuous_points: usize,
    /// Smallest slack of the upper check (negative means violated).
    pub worst_upper_margin: f64,
    /// Smallest slack of the lower check over non-vacuous points.
    pub worst_lower_margin: f64,
}

impl SandwichReport {
    pub fn violations(&self) -> usize {
        self.upper_violations + self.lower_violations
    }
}

/// Checks `(1 - ρ√ε(1+β̄_t)/σ̲) F̂_walk(t-ε) ≤ F̂_oracle(t) ≤ F̂_walk(t)` on
/// `grid`, each side relaxed by `ks_tol`.
pub fn cdf_sandwich_check(
    walk_times: &[f64],
    oracle_times: &[f64],
    eps: f64,
    params: &BoundParams,
    grid: &[f64],
    ks_tol: f64,
) -> Result<SandwichReport> {
    if walk_times.is_empty() || oracle_times.is_empty() {
        return Err(Error::Config("sandwich check needs non-empty samples".into()));
    }
    if params.beta_bar.len() != grid.len() {
        return Err(Error::Config("bound parameters must have one entry per grid point".into()));
    }
    let shifted: Vec<f64> = grid.iter().map(|t| t - eps).collect();
    let walk = empirical_cdf(walk_times, grid);
    let walk_shifted = empirical_cdf(walk_times, &shifted);
    let oracle = empirical_cdf(oracle_times, grid);
    let mut report = SandwichReport {
        eps,
        ks_tol,
        rho: params.rho,
        grid_points: grid.len(),
        upper_violations: 0,
        lower_violations: 0,
        vacuous_points: 0,
        worst_upper_margin: f64::INFINITY,
        worst_lower_margin: f64::INFINITY,
    };
    for i in 0..grid.len() {
        let upper_margin = walk[i].1 + ks_tol - oracle[i].1;
        report.worst_upper_margin = report.worst_upper_margin.min(upper_margin);
        if upper_margin < 0.0 {
            report.upper_violations += 1;
        }
        let prefactor = 1.0 - params.rho * eps.sqrt() * (1.0 + params.beta_bar[i]) / params.sigma_floor;
        if prefactor <= 0.0 {
            report.vacuous_points += 1;
            continue;
        }
        let lower_margin = oracle[i].1 + ks_tol - prefactor * walk_shifted[i].1;
        report.worst_lower_margin = report.worst_lower_margin.min(lower_margin);
        if lower_margin < 0.0 {
            report.lower_violations += 1;
        }
    }
    Ok(report)
}

/// Aggregated statistics of a batch of exits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n_samples: usize,
    pub mean_time: f64,
    pub var_time: f64,
    pub se_time: f64,
    pub upper_frequency: f64,
    pub lower_frequency: f64,
    pub censored_fraction: f64,
    pub mean_steps: f64,
    pub max_steps: u64,
    pub cdf: Vec<(f64, f64)>,
    pub ks_vs_oracle: Option<f64>,
    pub steps_table: Vec<StepsRow>,
    pub bound_params: Option<BoundParams>,
    pub histogram: Vec<HistogramBin>,
}

impl McReport {
    /// Summary statistics, a CDF on `cdf_points` quantile points and a
    /// Freedman–Diaconis histogram of the exit times.
    pub fn from_samples(samples: &[ExitSample], cdf_points: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("report needs at least one sample".into()));
        }
        let n = samples.len() as f64;
        let times: Vec<f64> = samples.iter().map(|s| s.time).collect();
        let (mean_time, se_time) = mean_and_se(times.iter().copied());
        let var_time = se_time * se_time * n;
        let count = |side| samples.iter().filter(|s| s.side == Some(side)).count() as f64 / n;
        let grid = quantile_grid(&times, cdf_points);
        Ok(Self {
            n_samples: samples.len(),
            mean_time,
            var_time,
            se_time,
            upper_frequency: count(Side::Upper),
            lower_frequency: count(Side::Lower),
            censored_fraction: samples.iter().filter(|s| s.censored).count() as f64 / n,
            mean_steps: samples.iter().map(|s| s.steps as f64).sum::<f64>() / n,
            max_steps: samples.iter().map(|s| s.steps).max().unwrap_or(0),
            cdf: empirical_cdf(&times, &grid),
            ks_vs_oracle: None,
            steps_table: Vec::new(),
            bound_params: None,
            histogram: histogram(&times, Binning::FreedmanDiaconis),
        })
    }
}
