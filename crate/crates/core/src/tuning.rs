//! Private tuning of the truncation interval and the sparsity level.
//!
//! Quantiles come from a Laplace-perturbed histogram, which is (ε, 0)-DP.
//! Sparsity is chosen by k-fold cross-validation over private fits, with the
//! clipped scores fed to the exponential mechanism.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::{BudgetLedger, PrivacyBudget};
use crate::data::{DataMatrix, RegressionData};
use crate::error::{ensure, Error, Result};
use crate::estimate::{check_multiplier, default_multiplier, Truncation};
use crate::mean::{private_sparse_mean, MeanConfig};
use crate::mechanisms::{exponential_mechanism, Norm, SensitivityBound};
use crate::regression::{private_sparse_regression, TheoryConstants};
use crate::rng::{NoiseSource, Seed};
use crate::vector::dot;

/// Histogram layout for [`private_quantile`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileConfig {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    /// Entries contributed by one individual; replacing an individual moves
    /// at most this many entries between cells.
    #[serde(default = "one")]
    pub group_size: usize,
    #[serde(default = "default_multiplier")]
    pub noise_multiplier: f64,
}

fn one() -> usize {
    1
}

impl QuantileConfig {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        QuantileConfig {
            lo,
            hi,
            bins,
            group_size: 1,
            noise_multiplier: 1.0,
        }
    }

    pub fn noise_multiplier(mut self, m: f64) -> Self {
        self.noise_multiplier = m;
        self
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    fn validate(&self) -> Result<()> {
        ensure(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi, || {
            format!("quantile bounds need finite lo < hi, got [{}, {}]", self.lo, self.hi)
        })?;
        ensure(self.bins >= 2, || format!("need at least 2 bins, got {}", self.bins))?;
        ensure(self.group_size >= 1, || "group size must be at least 1".into())?;
        check_multiplier(self.noise_multiplier)
    }
}

impl Default for QuantileConfig {
    fn default() -> Self {
        QuantileConfig::new(-50.0, 50.0, 200)
    }
}

/// Private `q`-quantile of `x` from a noisy histogram.
///
/// Entries are clipped to `[lo, hi]` and binned; each normalized cell count
/// gets Laplace noise of scale `2g / (N ε)` for `N` entries and group size
/// `g`. The result is the left edge of the first cell whose noisy cumulative
/// mass reaches `q`, or `hi` if none does.
pub fn private_quantile(x: &[f64], q: f64, budget: PrivacyBudget, cfg: &QuantileConfig, seed: Seed) -> Result<f64> {
    ensure(!x.is_empty(), || "quantile of an empty sample".into())?;
    ensure(q > 0.0 && q < 1.0, || format!("quantile level must lie in (0, 1), got {q}"))?;
    ensure(x.iter().all(|v| v.is_finite()), || "quantile input must be finite".into())?;
    cfg.validate()?;
    if x.len() % cfg.group_size != 0 {
        return Err(Error::invalid(format!(
            "{} entries do not divide into groups of {}",
            x.len(),
            cfg.group_size
        )));
    }
    let hist = noisy_histogram(x, budget, cfg, seed);
    Ok(scan(&hist, q, cfg))
}

fn noisy_histogram(x: &[f64], budget: PrivacyBudget, cfg: &QuantileConfig, seed: Seed) -> Vec<f64> {
    let width = cfg.width();
    let total = x.len() as f64;
    let mut hist = vec![0.0; cfg.bins];
    for v in x {
        let cell = ((v.clamp(cfg.lo, cfg.hi) - cfg.lo) / width).floor() as usize;
        hist[cell.min(cfg.bins - 1)] += 1.0;
    }
    let scale = cfg.noise_multiplier * 2.0 * cfg.group_size as f64 / (total * budget.epsilon());
    let mut src = NoiseSource::new(seed);
    for h in hist.iter_mut() {
        *h = *h / total + src.laplace(scale);
    }
    hist
}

fn scan(hist: &[f64], q: f64, cfg: &QuantileConfig) -> f64 {
    let mut acc = 0.0;
    for (k, h) in hist.iter().enumerate() {
        acc += h;
        if acc >= q {
            return cfg.lo + k as f64 * cfg.width();
        }
    }
    cfg.hi
}

/// Private 2.5% and 97.5% quantiles of all entries of `x` as a clamp interval.
///
/// The budget is split evenly between the two quantiles; each individual
/// contributes a whole row of entries. A degenerate or inverted pair is
/// widened to one cell.
pub fn data_driven_truncation(
    x: &DataMatrix,
    budget: PrivacyBudget,
    cfg: &QuantileConfig,
    seed: Seed,
) -> Result<(Truncation, BudgetLedger)> {
    let cfg = QuantileConfig {
        group_size: x.d(),
        ..cfg.clone()
    };
    quantile_interval(x.values(), budget, &cfg, seed)
}

/// Private 2.5% and 97.5% quantiles of the responses.
pub fn response_truncation(
    data: &RegressionData,
    budget: PrivacyBudget,
    cfg: &QuantileConfig,
    seed: Seed,
) -> Result<(Truncation, BudgetLedger)> {
    let cfg = QuantileConfig {
        group_size: 1,
        ..cfg.clone()
    };
    quantile_interval(data.y(), budget, &cfg, seed)
}

fn quantile_interval(
    values: &[f64],
    budget: PrivacyBudget,
    cfg: &QuantileConfig,
    seed: Seed,
) -> Result<(Truncation, BudgetLedger)> {
    let halves = budget.split(2)?;
    let lo = private_quantile(values, 0.025, halves[0], cfg, seed.derive(1))?;
    let hi = private_quantile(values, 0.975, halves[1], cfg, seed.derive(2))?;
    let (mut lo, mut hi) = (lo.min(hi), lo.max(hi));
    if hi - lo < cfg.width() {
        lo = lo.min(cfg.hi - cfg.width());
        hi = lo + cfg.width();
    }
    let ledger = BudgetLedger::node(
        "truncation quantiles",
        budget,
        vec![
            BudgetLedger::leaf("quantile 0.025", halves[0]),
            BudgetLedger::leaf("quantile 0.975", halves[1]),
        ],
    );
    Ok((Truncation::interval(lo, hi)?, ledger))
}

/// `4σ√(ln n)`.
pub fn theoretical_truncation(sigma: f64, n: f64) -> Result<f64> {
    ensure(sigma.is_finite() && sigma > 0.0, || format!("sigma must be positive, got {sigma}"))?;
    ensure(n.is_finite() && n >= 2.0, || format!("n must be at least 2, got {n}"))?;
    Ok(4.0 * sigma * n.ln().sqrt())
}

/// Problem whose sparsity is being tuned.
#[derive(Clone, Copy, Debug)]
pub enum CvProblem<'a> {
    SparseMean {
        data: &'a DataMatrix,
        truncation: Truncation,
    },
    /// Fits use the theory defaults for each candidate sparsity.
    SparseRegression {
        data: &'a RegressionData,
        truncation: Truncation,
        constants: TheoryConstants,
    },
}

impl CvProblem<'_> {
    fn n(&self) -> usize {
        match self {
            CvProblem::SparseMean { data, .. } => data.n(),
            CvProblem::SparseRegression { data, .. } => data.n(),
        }
    }

    fn d(&self) -> usize {
        match self {
            CvProblem::SparseMean { data, .. } => data.d(),
            CvProblem::SparseRegression { data, .. } => data.d(),
        }
    }

    /// Private fit on the rows in `train`, then clipped mean loss on `test`.
    fn fold_score(
        &self,
        s: usize,
        train: &[usize],
        test: &[usize],
        budget: PrivacyBudget,
        cfg: &CvConfig,
        seed: Seed,
    ) -> Result<f64> {
        let (lo, hi) = cfg.score_clip;
        let losses: Vec<f64> = match self {
            CvProblem::SparseMean { data, truncation } => {
                let fit_cfg = MeanConfig::new(*truncation, budget, seed)
                    .sparse(s)
                    .noise_multiplier(cfg.noise_multiplier);
                let mu = private_sparse_mean(&data.select_rows(train)?, &fit_cfg)?.value;
                let norm_sq = dot(&mu, &mu);
                test.iter().map(|&i| norm_sq - 2.0 * dot(data.row(i), &mu)).collect()
            }
            CvProblem::SparseRegression {
                data,
                truncation,
                constants,
            } => {
                let fit_cfg = constants
                    .sparse_config_with(train.len(), s, *truncation, budget, seed)
                    .noise_multiplier(cfg.noise_multiplier);
                let beta = private_sparse_regression(&data.select_rows(train)?, &fit_cfg)?.0.value;
                test.iter()
                    .map(|&i| (data.y()[i] - dot(data.x().row(i), &beta)).powi(2))
                    .collect()
            }
        };
        Ok(losses.iter().map(|l| l.clamp(lo, hi)).sum::<f64>() / losses.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub grid: Vec<usize>,
    pub folds: usize,
    /// Per-row losses are clipped to this interval.
    pub score_clip: (f64, f64),
    /// Share of ε spent on the final selection; the rest (and all of δ) pays
    /// for the fold fits.
    #[serde(default = "half")]
    pub selection_fraction: f64,
    #[serde(default = "default_multiplier")]
    pub noise_multiplier: f64,
}

fn half() -> f64 {
    0.5
}

impl CvConfig {
    pub fn new(grid: Vec<usize>, folds: usize, score_clip: (f64, f64)) -> Self {
        CvConfig {
            grid,
            folds,
            score_clip,
            selection_fraction: 0.5,
            noise_multiplier: 1.0,
        }
    }

    pub fn noise_multiplier(mut self, m: f64) -> Self {
        self.noise_multiplier = m;
        self
    }
}

/// Evenly spaced integer grid from `lo` to `hi` inclusive.
pub fn sparsity_grid(lo: usize, hi: usize, step: usize) -> Result<Vec<usize>> {
    ensure(lo >= 1 && lo <= hi && step >= 1, || {
        format!("invalid grid {lo}..={hi} step {step}")
    })?;
    Ok((lo..=hi).step_by(step).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub s: usize,
    /// Clipped cross-validation score per grid entry (empty for a single candidate).
    pub scores: Vec<f64>,
    pub budget: BudgetLedger,
}

/// Chooses a sparsity level privately by k-fold cross-validation.
///
/// Every (candidate, fold) fit receives an equal share of the fit budget.
/// The selection sees scores with sensitivity `(hi − lo)/⌊n/k⌋`. A grid with
/// a single candidate returns it without touching the data; its ledger
/// still records the budget it was handed.
pub fn private_cv_sparsity(problem: &CvProblem<'_>, cfg: &CvConfig, budget: PrivacyBudget, seed: Seed) -> Result<CvOutcome> {
    let (n, d) = (problem.n(), problem.d());
    ensure(!cfg.grid.is_empty(), || "sparsity grid is empty".into())?;
    if let Some(bad) = cfg.grid.iter().find(|&&s| s == 0 || s > d) {
        return Err(Error::invalid(format!("grid entry s = {bad} must satisfy 1 <= s <= d = {d}")));
    }
    ensure(cfg.folds >= 2, || format!("need at least 2 folds, got {}", cfg.folds))?;
    ensure(n >= cfg.folds, || format!("{n} rows cannot fill {} folds", cfg.folds))?;
    let (lo, hi) = cfg.score_clip;
    ensure(lo.is_finite() && hi.is_finite() && lo < hi, || {
        format!("score clip needs finite lo < hi, got ({lo}, {hi})")
    })?;
    check_multiplier(cfg.noise_multiplier)?;

    if cfg.grid.len() == 1 {
        return Ok(CvOutcome {
            s: cfg.grid[0],
            scores: Vec::new(),
            budget: BudgetLedger::leaf("sparsity selection (single candidate, unspent)", budget),
        });
    }

    let (select_budget, fit_budget) = budget.split_epsilon(cfg.selection_fraction)?;
    let pairs = cfg.grid.len() * cfg.folds;
    let shares = fit_budget.split(pairs)?;
    let folds = fold_ranges(n, cfg.folds);

    let fold_scores: Vec<f64> = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let (g, f) = (k / cfg.folds, k % cfg.folds);
            let test: Vec<usize> = folds[f].clone().collect();
            let train: Vec<usize> = (0..n).filter(|i| !folds[f].contains(i)).collect();
            problem.fold_score(cfg.grid[g], &train, &test, shares[k], cfg, seed.derive(k as u64 + 1))
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = fold_scores
        .chunks(cfg.folds)
        .map(|c| c.iter().sum::<f64>() / cfg.folds as f64)
        .collect();

    let sensitivity = SensitivityBound::new(Norm::L1, (hi - lo) / (n / cfg.folds) as f64)?;
    let epsilon = if cfg.noise_multiplier == 0.0 {
        f64::INFINITY
    } else {
        select_budget.epsilon() / cfg.noise_multiplier
    };
    let pick = exponential_mechanism(&scores, sensitivity, epsilon, seed.derive(0))?;

    let fits = shares
        .iter()
        .enumerate()
        .map(|(k, b)| BudgetLedger::leaf(format!("fit s={} fold {}", cfg.grid[k / cfg.folds], k % cfg.folds), *b))
        .collect();
    let ledger = BudgetLedger::node(
        "sparsity selection",
        budget,
        vec![
            BudgetLedger::leaf("exponential mechanism", select_budget),
            BudgetLedger::node("fold fits", fit_budget, fits),
        ],
    );
    Ok(CvOutcome {
        s: cfg.grid[pick],
        scores,
        budget: ledger,
    })
}

/// Contiguous folds whose sizes differ by at most one.
fn fold_ranges(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    (0..k).map(|f| f * n / k..(f + 1) * n / k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget(eps: f64) -> PrivacyBudget {
        PrivacyBudget::new(eps, 1e-3).unwrap()
    }

    #[test]
    fn histogram_median() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        let cfg = QuantileConfig::new(0.0, 100.0, 100).noise_multiplier(0.0);
        let m = private_quantile(&x, 0.5, budget(1.0), &cfg, Seed(1)).unwrap();
        assert!((m - 50.0).abs() <= 1.0, "{m}");
    }

    #[test]
    fn quantile_stays_in_bounds() {
        let x = vec![-1e6, 1e6, 3.0];
        let cfg = QuantileConfig::new(-5.0, 5.0, 10);
        for seed in 0..200 {
            for q in [0.01, 0.5, 0.99] {
                let v = private_quantile(&x, q, budget(0.1), &cfg, Seed(seed)).unwrap();
                assert!((-5.0..=5.0).contains(&v));
            }
        }
    }

    #[test]
    fn quantile_monotone_in_q() {
        let x: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64 / 10.0).collect();
        let cfg = QuantileConfig::new(0.0, 10.0, 50);
        for seed in 0..50 {
            let qs: Vec<f64> = (1..20)
                .map(|k| private_quantile(&x, k as f64 / 20.0, budget(0.5), &cfg, Seed(seed)).unwrap())
                .collect();
            assert!(qs.windows(2).all(|w| w[0] <= w[1]), "{qs:?}");
        }
    }

    #[test]
    fn quantile_errors() {
        let cfg = QuantileConfig::new(0.0, 1.0, 10);
        assert!(private_quantile(&[], 0.5, budget(1.0), &cfg, Seed(1)).is_err());
        assert!(private_quantile(&[0.5], 1.0, budget(1.0), &cfg, Seed(1)).is_err());
        let one_bin = QuantileConfig::new(0.0, 1.0, 1);
        assert!(private_quantile(&[0.5], 0.5, budget(1.0), &one_bin, Seed(1)).is_err());
    }

    #[test]
    fn constant_data_truncation() {
        let x = DataMatrix::new(50, 2, vec![3.3; 100]).unwrap();
        let cfg = QuantileConfig::new(-10.0, 10.0, 200).noise_multiplier(0.0);
        let (t, ledger) = data_driven_truncation(&x, budget(1.0), &cfg, Seed(3)).unwrap();
        let tol = cfg.width() * (1.0 + 1e-9);
        assert!((t.lo() - 3.3).abs() <= tol && (t.hi() - 3.3).abs() <= tol, "{t:?}");
        assert!(ledger.is_balanced());
    }

    #[test]
    fn symmetric_data_gives_symmetric_interval() {
        let vals: Vec<f64> = (0..1000).map(|i| (i as f64 - 499.5) / 100.0).collect();
        let x = DataMatrix::new(500, 2, vals).unwrap();
        let cfg = QuantileConfig::new(-10.0, 10.0, 2000).noise_multiplier(0.0);
        let (t, _) = data_driven_truncation(&x, budget(1.0), &cfg, Seed(3)).unwrap();
        assert!((t.lo() + t.hi()).abs() <= 2.0 * cfg.width(), "{t:?}");
    }

    #[test]
    fn theoretical_values() {
        assert!((theoretical_truncation(1.0, std::f64::consts::E).unwrap() - 4.0).abs() < 1e-15);
        assert!((theoretical_truncation(2.0, 4f64.exp()).unwrap() - 16.0).abs() < 1e-12);
        assert!((theoretical_truncation(1.0, 1e5).unwrap() - 13.572_280_848_830_223).abs() < 1e-12);
        assert!(theoretical_truncation(0.0, 10.0).is_err());
        assert!(theoretical_truncation(1.0, 1.0).is_err());
    }

    #[test]
    fn folds_cover_rows() {
        let f = fold_ranges(11, 3);
        assert_eq!(f, vec![0..3, 3..7, 7..11]);
        assert_eq!(sparsity_grid(10, 40, 5).unwrap(), vec![10, 15, 20, 25, 30, 35, 40]);
    }

    fn sparse_mean_data() -> DataMatrix {
        // Three strong coordinates, the rest pure noise.
        let mut src = NoiseSource::new(Seed(11));
        let (n, d) = (200, 12);
        let mu = [6.0, -5.0, 4.0];
        let vals = (0..n * d)
            .map(|k| mu.get(k % d).copied().unwrap_or(0.0) + 0.3 * src.standard_normal())
            .collect();
        DataMatrix::new(n, d, vals).unwrap()
    }

    #[test]
    fn single_candidate_skips_data() {
        let x = sparse_mean_data();
        let problem = CvProblem::SparseMean {
            data: &x,
            truncation: Truncation::symmetric(10.0).unwrap(),
        };
        let out = private_cv_sparsity(&problem, &CvConfig::new(vec![4], 5, (-100.0, 100.0)), budget(1.0), Seed(1)).unwrap();
        assert_eq!(out.s, 4);
        assert!(out.scores.is_empty());
        assert_eq!(out.budget.epsilon, 1.0);
    }

    #[test]
    fn zero_noise_picks_argmin() {
        let x = sparse_mean_data();
        let problem = CvProblem::SparseMean {
            data: &x,
            truncation: Truncation::symmetric(10.0).unwrap(),
        };
        let cfg = CvConfig::new(vec![1, 2, 3, 6, 9], 5, (-200.0, 200.0)).noise_multiplier(0.0);
        let out = private_cv_sparsity(&problem, &cfg, budget(1.0), Seed(2)).unwrap();
        let best = out.scores.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(out.scores[cfg.grid.iter().position(|&s| s == out.s).unwrap()], best);
        assert!(out.s >= 3, "dropped a strong coordinate: s = {}", out.s);
        assert!(out.budget.is_balanced());
    }

    #[test]
    fn cv_rejects_bad_grid() {
        let x = sparse_mean_data();
        let problem = CvProblem::SparseMean {
            data: &x,
            truncation: Truncation::symmetric(10.0).unwrap(),
        };
        for cfg in [
            CvConfig::new(vec![2, 13], 5, (-1.0, 1.0)),
            CvConfig::new(vec![], 5, (-1.0, 1.0)),
            CvConfig::new(vec![2, 3], 1, (-1.0, 1.0)),
            CvConfig::new(vec![2, 3], 5, (1.0, 1.0)),
        ] {
            assert!(private_cv_sparsity(&problem, &cfg, budget(1.0), Seed(1)).is_err());
        }
    }
}
