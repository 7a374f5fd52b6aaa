//! Simulation harness: synthetic data, repeated private and non-private fits
//! over a grid of sample sizes, and error summaries with log-log slopes.
//!
//! Each (n, rep) cell has its own derived seed, so results do not depend on
//! the order or degree of parallelism in which cells run.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::{BudgetLedger, PrivacyBudget};
use crate::data::{format_real, DataMatrix, RegressionData};
use crate::error::{ensure, Error, Result};
use crate::estimate::Truncation;
use crate::mean::{private_mean, private_sparse_mean, MeanConfig};
use crate::regression::{private_linear_regression, private_sparse_regression, TheoryConstants};
use crate::rng::{NoiseSource, Seed};
use crate::tuning::{
    data_driven_truncation, private_cv_sparsity, response_truncation, sparsity_grid, theoretical_truncation,
    CvConfig, CvProblem, QuantileConfig,
};
use crate::vector::{distance, norm2, norm_inf};

/// `10 / n^1.1`.
pub fn delta_rule(n: usize) -> Result<f64> {
    DeltaRule::default().delta(n)
}

/// Rows i.i.d. N(μ, I). μ has i.i.d. Uniform(−10, 10) entries on the first
/// `s_star` coordinates (all of them when absent) and zeros elsewhere.
pub fn gen_mean_data(n: usize, d: usize, s_star: Option<usize>, seed: Seed) -> Result<(DataMatrix, Vec<f64>)> {
    let active = check_sparsity(d, s_star)?;
    ensure(n >= 1, || "n must be positive".into())?;
    let mut src = NoiseSource::new(seed);
    let mu: Vec<f64> = (0..d)
        .map(|j| if j < active { src.uniform(-10.0, 10.0) } else { 0.0 })
        .collect();
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        values.extend(mu.iter().map(|m| m + src.standard_normal()));
    }
    Ok((DataMatrix::new(n, d, values)?, mu))
}

/// Design entries i.i.d. Uniform(−1/√d, 1/√d); β uniform on the unit sphere
/// of the first `s_star` coordinates (all when absent); y = Xβ + N(0, σ²).
pub fn gen_regression_data(
    n: usize,
    d: usize,
    s_star: Option<usize>,
    sigma: f64,
    seed: Seed,
) -> Result<(RegressionData, Vec<f64>)> {
    let active = check_sparsity(d, s_star)?;
    ensure(n >= 1, || "n must be positive".into())?;
    ensure(sigma.is_finite() && sigma >= 0.0, || format!("sigma must be non-negative, got {sigma}"))?;
    let mut src = NoiseSource::new(seed);
    let mut beta = vec![0.0; d];
    loop {
        beta[..active].iter_mut().for_each(|b| *b = src.standard_normal());
        let norm = norm2(&beta);
        if norm > 0.0 {
            beta.iter_mut().for_each(|b| *b /= norm);
            break;
        }
    }
    let a = 1.0 / (d as f64).sqrt();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = x.len();
        for _ in 0..d {
            let v = loop {
                let v = src.uniform(-a, a);
                if v.abs() < a {
                    break v;
                }
            };
            x.push(v);
        }
        let signal: f64 = x[start..].iter().zip(&beta).map(|(xi, b)| xi * b).sum();
        y.push(signal + sigma * src.standard_normal());
    }
    Ok((RegressionData::new(DataMatrix::new(n, d, x)?, y)?, beta))
}

fn check_sparsity(d: usize, s_star: Option<usize>) -> Result<usize> {
    ensure(d >= 1, || "d must be positive".into())?;
    match s_star {
        Some(s) => {
            ensure(s >= 1 && s <= d, || format!("s* must satisfy 1 <= s* <= d = {d}, got {s}"))?;
            Ok(s)
        }
        None => Ok(d),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Mean,
    SparseMean,
    Regression,
    SparseRegression,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Mean => "mean",
            Problem::SparseMean => "sparse_mean",
            Problem::Regression => "regression",
            Problem::SparseRegression => "sparse_regression",
        }
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, Problem::SparseMean | Problem::SparseRegression)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", deny_unknown_fields)]
pub enum DimensionRule {
    Fixed { value: usize },
    /// d = n.
    N,
    /// d = 2n.
    TwoN,
}

impl DimensionRule {
    pub fn dimension(self, n: usize) -> usize {
        match self {
            DimensionRule::Fixed { value } => value,
            DimensionRule::N => n,
            DimensionRule::TwoN => 2 * n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", deny_unknown_fields)]
pub enum DeltaRule {
    /// δ = scale / n^exponent.
    Power { scale: f64, exponent: f64 },
    Fixed { value: f64 },
}

impl Default for DeltaRule {
    fn default() -> Self {
        DeltaRule::Power {
            scale: 10.0,
            exponent: 1.1,
        }
    }
}

impl DeltaRule {
    pub fn delta(self, n: usize) -> Result<f64> {
        ensure(n >= 2, || format!("n must be at least 2, got {n}"))?;
        let delta = match self {
            DeltaRule::Power { scale, exponent } => scale / (n as f64).powf(exponent),
            DeltaRule::Fixed { value } => value,
        };
        ensure(delta > 0.0 && delta < 1.0, || format!("delta rule gives {delta} at n = {n}"))?;
        Ok(delta)
    }
}

/// How the clamp interval is chosen in each cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", deny_unknown_fields)]
pub enum TruncationRule {
    /// R = k·σ·√(ln n).
    Theory {
        #[serde(default = "four")]
        k: f64,
    },
    /// Private 2.5%/97.5% quantiles, paid from `fraction` of ε.
    DataDriven {
        #[serde(default = "tenth")]
        fraction: f64,
        #[serde(default)]
        quantile: QuantileConfig,
    },
    /// R = largest observed magnitude. Not private; a reference point only.
    None,
    Fixed { value: f64 },
}

fn four() -> f64 {
    4.0
}

fn tenth() -> f64 {
    0.1
}

impl Default for TruncationRule {
    fn default() -> Self {
        TruncationRule::Theory { k: 4.0 }
    }
}

/// How the working sparsity is chosen for sparse problems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", deny_unknown_fields)]
pub enum SparsityRule {
    /// s = s* for the sparse mean, s = ⌈ρL⁴s*⌉ for sparse regression.
    Theory,
    Fixed { value: usize },
    /// Private k-fold cross-validation over `lo..=hi` in steps of `step`,
    /// paid from `fraction` of the estimation budget.
    Cv {
        lo: usize,
        hi: usize,
        #[serde(default = "one")]
        step: usize,
        #[serde(default = "five")]
        folds: usize,
        clip: (f64, f64),
        #[serde(default = "tenth")]
        fraction: f64,
    },
}

fn one() -> usize {
    1
}

fn five() -> usize {
    5
}

impl Default for SparsityRule {
    fn default() -> Self {
        SparsityRule::Theory
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: Problem,
    pub n_grid: Vec<usize>,
    pub d: DimensionRule,
    #[serde(default)]
    pub s_star: Option<usize>,
    pub epsilon: f64,
    #[serde(default)]
    pub delta: DeltaRule,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub truncation: TruncationRule,
    #[serde(default)]
    pub sparsity: SparsityRule,
    #[serde(default = "unit")]
    pub sigma: f64,
    #[serde(default)]
    pub constants: TheoryConstants,
}

fn unit() -> f64 {
    1.0
}

impl ExperimentSpec {
    /// Checks the whole spec and reports every offending field at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_grid.is_empty() {
            problems.push("n_grid: must not be empty".to_string());
        }
        if let Some(n) = self.n_grid.iter().find(|&&n| n < 2) {
            problems.push(format!("n_grid: every n must be at least 2, found {n}"));
        }
        if self.reps == 0 {
            problems.push("reps: must be at least 1".into());
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            problems.push(format!("epsilon: must be positive, got {}", self.epsilon));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            problems.push(format!("sigma: must be positive, got {}", self.sigma));
        }
        for &n in &self.n_grid {
            if n >= 2 {
                if let Err(e) = self.delta.delta(n) {
                    problems.push(format!("delta: {e}"));
                    break;
                }
            }
        }
        if let DimensionRule::Fixed { value: 0 } = self.d {
            problems.push("d: fixed dimension must be positive".into());
        }
        match (self.problem.is_sparse(), self.s_star) {
            (true, None) => problems.push("s_star: required for sparse problems".into()),
            (_, Some(s)) => {
                if s == 0 {
                    problems.push("s_star: must be at least 1".into());
                }
                for &n in &self.n_grid {
                    let d = self.d.dimension(n);
                    if s > d {
                        problems.push(format!("s_star: {s} exceeds d = {d} at n = {n}"));
                        break;
                    }
                }
            }
            (false, None) => {}
        }
        match &self.truncation {
            TruncationRule::Theory { k } if !(k.is_finite() && *k > 0.0) => {
                problems.push(format!("truncation.k: must be positive, got {k}"))
            }
            TruncationRule::DataDriven { fraction, .. } if !(*fraction > 0.0 && *fraction < 1.0) => {
                problems.push(format!("truncation.fraction: must lie in (0, 1), got {fraction}"))
            }
            TruncationRule::Fixed { value } if !(value.is_finite() && *value > 0.0) => {
                problems.push(format!("truncation.value: must be positive, got {value}"))
            }
            _ => {}
        }
        if !self.problem.is_sparse() && self.sparsity != SparsityRule::Theory {
            problems.push("sparsity: only applies to sparse problems".into());
        }
        match &self.sparsity {
            SparsityRule::Fixed { value: 0 } => problems.push("sparsity.value: must be at least 1".into()),
            SparsityRule::Cv {
                lo,
                hi,
                step,
                folds,
                clip,
                fraction,
            } => {
                if *lo == 0 || lo > hi || *step == 0 {
                    problems.push(format!("sparsity: invalid grid {lo}..={hi} step {step}"));
                }
                if *folds < 2 {
                    problems.push("sparsity.folds: must be at least 2".into());
                }
                if !(clip.0 < clip.1) {
                    problems.push("sparsity.clip: needs lo < hi".into());
                }
                if !(*fraction > 0.0 && *fraction < 1.0) {
                    problems.push(format!("sparsity.fraction: must lie in (0, 1), got {fraction}"));
                }
            }
            _ => {}
        }
        let c = &self.constants;
        if ![c.l, c.c0, c.cx, c.rho].iter().all(|v| v.is_finite() && *v > 0.0) {
            problems.push("constants: l, c0, cx and rho must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }

    /// Grid points as (n, d, δ).
    pub fn resolved_grid(&self) -> Result<Vec<(usize, usize, f64)>> {
        self.validate()?;
        self.n_grid
            .iter()
            .map(|&n| Ok((n, self.d.dimension(n), self.delta.delta(n)?)))
            .collect()
    }

    /// Seed of the (grid point, repetition) cell. Within a cell, data use
    /// `derive(0)`, truncation `derive(1)`, the final fit `derive(2)` and
    /// sparsity selection `derive(3)`.
    pub fn cell_seed(&self, grid_index: usize, rep: usize) -> Seed {
        Seed(self.seed).derive(grid_index as u64).derive(rep as u64)
    }
}

/// One (n, rep) cell. Errors are NaN when the cell failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub n: usize,
    pub d: usize,
    /// Working sparsity used by the private fit (0 for dense problems).
    pub s: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub rep: usize,
    pub seed: u64,
    pub err_private: f64,
    pub err_nonprivate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(skip)]
    pub budget: Option<BudgetLedger>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub n: usize,
    pub d: usize,
    pub delta: f64,
    pub completed: usize,
    pub failed: usize,
    pub mean_private: f64,
    pub se_private: f64,
    pub mean_nonprivate: f64,
    pub se_nonprivate: f64,
    /// Mean of the paired differences err_private − err_nonprivate.
    pub mean_gap: f64,
    pub se_gap: f64,
    pub mean_sq_private: f64,
    pub mean_sq_nonprivate: f64,
}

/// Least-squares slopes of log(mean error) against log(n).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub private: Option<f64>,
    pub nonprivate: Option<f64>,
    pub private_squared: Option<f64>,
    pub nonprivate_squared: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub cells: Vec<CellResult>,
    pub grid: Vec<GridSummary>,
    pub slopes: Slopes,
}

/// Runs every cell of the experiment. `jobs` bounds the worker threads
/// (all available cores when absent); the result does not depend on it.
pub fn run_experiment(spec: &ExperimentSpec, jobs: Option<usize>) -> Result<ExperimentResult> {
    let grid = spec.resolved_grid()?;
    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..spec.reps).map(move |r| (g, r)))
        .collect();
    let run_all = || -> Vec<CellResult> {
        tasks
            .par_iter()
            .map(|&(g, rep)| {
                let (n, d, delta) = grid[g];
                run_cell(spec, n, d, delta, rep, spec.cell_seed(g, rep))
            })
            .collect()
    };
    let cells = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {j} worker threads: {e}")))?
            .install(run_all),
        None => run_all(),
    };
    let summaries: Vec<GridSummary> = grid
        .iter()
        .map(|&(n, d, delta)| summarize(n, d, delta, cells.iter().filter(|c| c.n == n)))
        .collect();
    let slopes = Slopes {
        private: loglog_slope(&summaries, |g| g.mean_private),
        nonprivate: loglog_slope(&summaries, |g| g.mean_nonprivate),
        private_squared: loglog_slope(&summaries, |g| g.mean_sq_private),
        nonprivate_squared: loglog_slope(&summaries, |g| g.mean_sq_nonprivate),
    };
    Ok(ExperimentResult {
        spec: spec.clone(),
        cells,
        grid: summaries,
        slopes,
    })
}

struct Fit {
    error: f64,
    s: usize,
    budget: BudgetLedger,
}

fn run_cell(spec: &ExperimentSpec, n: usize, d: usize, delta: f64, rep: usize, seed: Seed) -> CellResult {
    let outcome = (|| -> Result<(Fit, Fit)> {
        let budget = PrivacyBudget::new(spec.epsilon, delta)?;
        let private = fit_once(spec, n, d, budget, seed, 1.0)?;
        let nonprivate = fit_once(spec, n, d, budget, seed, 0.0)?;
        Ok((private, nonprivate))
    })();
    let base = CellResult {
        n,
        d,
        s: 0,
        epsilon: spec.epsilon,
        delta,
        rep,
        seed: seed.value(),
        err_private: f64::NAN,
        err_nonprivate: f64::NAN,
        failure: None,
        budget: None,
    };
    match outcome {
        Ok((p, np)) => CellResult {
            s: p.s,
            err_private: p.error,
            err_nonprivate: np.error,
            budget: Some(p.budget),
            ..base
        },
        Err(e) => CellResult {
            failure: Some(e.to_string()),
            ..base
        },
    }
}

/// Generates the cell's data and runs the full pipeline once.
/// `multiplier` scales every noise draw, including those of the tuning steps.
fn fit_once(spec: &ExperimentSpec, n: usize, d: usize, budget: PrivacyBudget, seed: Seed, multiplier: f64) -> Result<Fit> {
    let data_seed = seed.derive(0);
    let mut stages = Vec::new();
    let (truncation_budget, mut estimate_budget) = match &spec.truncation {
        TruncationRule::DataDriven { fraction, .. } => {
            let (a, b) = budget.split_epsilon(*fraction)?;
            (Some(a), b)
        }
        _ => (None, budget),
    };
    let (cv_budget, final_budget) = match &spec.sparsity {
        SparsityRule::Cv { fraction, .. } => {
            let (a, b) = estimate_budget.split_fraction(*fraction)?;
            (Some(a), b)
        }
        _ => (None, estimate_budget),
    };
    estimate_budget = final_budget;

    match spec.problem {
        Problem::Mean | Problem::SparseMean => {
            let s_star = spec.problem.is_sparse().then_some(spec.s_star).flatten();
            let (x, mu) = gen_mean_data(n, d, s_star, data_seed)?;
            let truncation = match (&spec.truncation, truncation_budget) {
                (TruncationRule::DataDriven { quantile, .. }, Some(tb)) => {
                    let q = quantile.clone().noise_multiplier(quantile.noise_multiplier * multiplier);
                    let (t, ledger) = data_driven_truncation(&x, tb, &q, seed.derive(1))?;
                    stages.push(ledger);
                    t
                }
                (rule, _) => simple_truncation(rule, spec.sigma, n, || norm_inf(x.values()))?,
            };
            let s = match (&spec.sparsity, cv_budget) {
                _ if !spec.problem.is_sparse() => None,
                (SparsityRule::Cv { lo, hi, step, folds, clip, .. }, Some(cb)) => {
                    let cfg = CvConfig::new(sparsity_grid(*lo, *hi, *step)?, *folds, *clip).noise_multiplier(multiplier);
                    let problem = CvProblem::SparseMean { data: &x, truncation };
                    let out = private_cv_sparsity(&problem, &cfg, cb, seed.derive(3))?;
                    stages.push(out.budget);
                    Some(out.s)
                }
                (SparsityRule::Fixed { value }, _) => Some(*value),
                _ => spec.s_star,
            };
            let mut cfg = MeanConfig::new(truncation, estimate_budget, seed.derive(2)).noise_multiplier(multiplier);
            cfg.s = s;
            let est = match s {
                Some(_) => private_sparse_mean(&x, &cfg)?,
                None => private_mean(&x, &cfg)?,
            };
            stages.push(est.budget);
            Ok(Fit {
                error: distance(&est.value, &mu),
                s: s.unwrap_or(0),
                budget: BudgetLedger::node("pipeline", budget, stages),
            })
        }
        Problem::Regression | Problem::SparseRegression => {
            let s_star = spec.problem.is_sparse().then_some(spec.s_star).flatten();
            let (data, beta) = gen_regression_data(n, d, s_star, spec.sigma, data_seed)?;
            let truncation = match (&spec.truncation, truncation_budget) {
                (TruncationRule::DataDriven { quantile, .. }, Some(tb)) => {
                    let q = quantile.clone().noise_multiplier(quantile.noise_multiplier * multiplier);
                    let (t, ledger) = response_truncation(&data, tb, &q, seed.derive(1))?;
                    stages.push(ledger);
                    t
                }
                (rule, _) => simple_truncation(rule, spec.sigma, n, || norm_inf(data.y()))?,
            };
            let k = spec.constants;
            let s = match (&spec.sparsity, cv_budget) {
                _ if !spec.problem.is_sparse() => None,
                (SparsityRule::Cv { lo, hi, step, folds, clip, .. }, Some(cb)) => {
                    let cfg = CvConfig::new(sparsity_grid(*lo, *hi, *step)?, *folds, *clip).noise_multiplier(multiplier);
                    let problem = CvProblem::SparseRegression {
                        data: &data,
                        truncation,
                        constants: k,
                    };
                    let out = private_cv_sparsity(&problem, &cfg, cb, seed.derive(3))?;
                    stages.push(out.budget);
                    Some(out.s)
                }
                (SparsityRule::Fixed { value }, _) => Some(*value),
                _ => spec.s_star.map(|s| k.working_sparsity(s)),
            };
            let (est, _) = match s {
                Some(s) => {
                    let cfg = k
                        .sparse_config_with(n, s.min(d), truncation, estimate_budget, seed.derive(2))
                        .noise_multiplier(multiplier);
                    private_sparse_regression(&data, &cfg)?
                }
                None => {
                    let cfg = k
                        .dense_config(n, d, truncation, estimate_budget, seed.derive(2))
                        .noise_multiplier(multiplier);
                    private_linear_regression(&data, &cfg)?
                }
            };
            stages.push(est.budget);
            Ok(Fit {
                error: distance(&est.value, &beta),
                s: s.map(|s| s.min(d)).unwrap_or(0),
                budget: BudgetLedger::node("pipeline", budget, stages),
            })
        }
    }
}

fn simple_truncation(rule: &TruncationRule, sigma: f64, n: usize, observed_max: impl FnOnce() -> f64) -> Result<Truncation> {
    match rule {
        TruncationRule::Theory { k } => Truncation::symmetric(k / 4.0 * theoretical_truncation(sigma, n as f64)?),
        TruncationRule::Fixed { value } => Truncation::symmetric(*value),
        TruncationRule::None => Truncation::symmetric(observed_max().max(f64::MIN_POSITIVE)),
        TruncationRule::DataDriven { .. } => Err(Error::invalid("data-driven truncation needs a budget")),
    }
}

fn summarize<'a>(n: usize, d: usize, delta: f64, cells: impl Iterator<Item = &'a CellResult>) -> GridSummary {
    let cells: Vec<&CellResult> = cells.collect();
    let ok: Vec<&&CellResult> = cells.iter().filter(|c| c.failure.is_none()).collect();
    let col = |f: &dyn Fn(&CellResult) -> f64| ok.iter().map(|c| f(c)).collect::<Vec<f64>>();
    let p = col(&|c| c.err_private);
    let np = col(&|c| c.err_nonprivate);
    let gap = col(&|c| c.err_private - c.err_nonprivate);
    let (mean_private, se_private) = mean_se(&p);
    let (mean_nonprivate, se_nonprivate) = mean_se(&np);
    let (mean_gap, se_gap) = mean_se(&gap);
    GridSummary {
        n,
        d,
        delta,
        completed: ok.len(),
        failed: cells.len() - ok.len(),
        mean_private,
        se_private,
        mean_nonprivate,
        se_nonprivate,
        mean_gap,
        se_gap,
        mean_sq_private: mean_se(&p.iter().map(|e| e * e).collect::<Vec<_>>()).0,
        mean_sq_nonprivate: mean_se(&np.iter().map(|e| e * e).collect::<Vec<_>>()).0,
    }
}

/// Sample mean and its standard error (NaN when undefined).
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn loglog_slope(grid: &[GridSummary], value: impl Fn(&GridSummary) -> f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .filter(|g| value(g) > 0.0 && value(g).is_finite())
        .map(|g| ((g.n as f64).ln(), value(g).ln()))
        .collect();
    least_squares_slope(&pts)
}

/// Ordinary least-squares slope through the points; `None` with fewer than
/// two distinct abscissae.
pub fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

impl ExperimentResult {
    /// One row per cell: problem, n, d, s, epsilon, delta, rep, seed,
    /// err_private, err_nonprivate.
    pub fn write_cells_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "problem",
            "n",
            "d",
            "s",
            "epsilon",
            "delta",
            "rep",
            "seed",
            "err_private",
            "err_nonprivate",
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
        for c in &self.cells {
            w.write_record([
                self.spec.problem.name().to_string(),
                c.n.to_string(),
                c.d.to_string(),
                c.s.to_string(),
                format_real(c.epsilon),
                format_real(c.delta),
                c.rep.to_string(),
                c.seed.to_string(),
                format_real(c.err_private),
                format_real(c.err_nonprivate),
            ])
            .map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aggregates and slopes as JSON (cells excluded).
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            spec: &'a ExperimentSpec,
            grid: &'a [GridSummary],
            slopes: &'a Slopes,
            failures: Vec<String>,
        }
        let failures = self
            .cells
            .iter()
            .filter_map(|c| c.failure.as_ref().map(|f| format!("n={} rep={}: {f}", c.n, c.rep)))
            .collect();
        Ok(serde_json::to_string_pretty(&Summary {
            spec: &self.spec,
            grid: &self.grid,
            slopes: &self.slopes,
            failures,
        })?)
    }

    /// Fixed-width table of the grid summaries.
    pub fn summary_table(&self) -> String {
        let mut out = format!(
            "{:>8} {:>7} {:>12} {:>12} {:>12} {:>12} {:>5}\n",
            "n", "d", "err_priv", "se_priv", "err_nonpriv", "se_nonpriv", "fail"
        );
        for g in &self.grid {
            out.push_str(&format!(
                "{:>8} {:>7} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>5}\n",
                g.n, g.d, g.mean_private, g.se_private, g.mean_nonprivate, g.se_nonprivate, g.failed
            ));
        }
        let fmt = |s: Option<f64>| s.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        out.push_str(&format!(
            "log-log slope: private {}, non-private {}\n",
            fmt(self.slopes.private),
            fmt(self.slopes.nonprivate)
        ));
        out
    }
}
