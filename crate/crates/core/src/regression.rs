//! Private least squares: noisy projected gradient descent for the dense
//! problem and noisy iterative hard thresholding for the sparse one.
//!
//! Both run `T` iterations of
//!
//! ```text
//! β ← Π_C(step(β − η⁰ · (1/n) Σ (xᵢᵀβ − clamp(yᵢ)) xᵢ))
//! ```
//!
//! where `step` adds Gaussian noise (dense) or peels the top `s` coordinates
//! (sparse). The budget is split evenly across iterations.

use serde::{Deserialize, Serialize};

use crate::budget::{BudgetLedger, PrivacyBudget};
use crate::data::RegressionData;
use crate::error::{ensure, Error, Result};
use crate::estimate::{check_multiplier, default_multiplier, Estimate, Truncation};
use crate::mechanisms::peeling_scale;
use crate::noise::{NoiseDistribution, NoiseLedger, NoiseRecord, NoiseRole};
use crate::peeling::peel_with_scale;
use crate::rng::{NoiseSource, Seed};
use crate::vector::{dot, project_l2_ball_in_place};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    /// Step size η⁰.
    pub eta0: f64,
    /// Number of iterations T.
    pub iterations: usize,
    /// Clamp applied to the responses.
    pub truncation: Truncation,
    /// Feasibility radius C.
    pub radius: f64,
    /// Gradient sensitivity scale B.
    pub b: f64,
    /// Output sparsity; required by the sparse estimator, rejected by the dense one.
    #[serde(default)]
    pub s: Option<usize>,
    pub budget: PrivacyBudget,
    /// Starting point; zero when absent.
    #[serde(default)]
    pub beta0: Option<Vec<f64>>,
    pub seed: Seed,
    /// Assumed bound on ‖β‖₂. The radius is capped at this value.
    #[serde(default = "default_norm_bound")]
    pub norm_bound: f64,
    #[serde(default = "default_multiplier")]
    pub noise_multiplier: f64,
    #[serde(default)]
    pub keep_noise: bool,
    #[serde(default)]
    pub keep_trace: bool,
}

fn default_norm_bound() -> f64 {
    1.0
}

impl RegressionConfig {
    pub fn new(
        eta0: f64,
        iterations: usize,
        truncation: Truncation,
        radius: f64,
        b: f64,
        budget: PrivacyBudget,
        seed: Seed,
    ) -> Self {
        RegressionConfig {
            eta0,
            iterations,
            truncation,
            radius,
            b,
            s: None,
            budget,
            beta0: None,
            seed,
            norm_bound: radius,
            noise_multiplier: 1.0,
            keep_noise: false,
            keep_trace: false,
        }
    }

    pub fn sparse(mut self, s: usize) -> Self {
        self.s = Some(s);
        self
    }

    pub fn noise_multiplier(mut self, m: f64) -> Self {
        self.noise_multiplier = m;
        self
    }

    pub fn keep_noise(mut self, keep: bool) -> Self {
        self.keep_noise = keep;
        self
    }

    pub fn keep_trace(mut self, keep: bool) -> Self {
        self.keep_trace = keep;
        self
    }

    pub fn beta0(mut self, beta0: Vec<f64>) -> Self {
        self.beta0 = Some(beta0);
        self
    }

    fn validate(&self, d: usize) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        ensure(positive(self.eta0), || format!("step size must be positive, got {}", self.eta0))?;
        ensure(self.iterations >= 1, || "iteration count must be at least 1".into())?;
        ensure(positive(self.radius), || format!("radius must be positive, got {}", self.radius))?;
        ensure(positive(self.b), || format!("B must be positive, got {}", self.b))?;
        ensure(positive(self.norm_bound), || {
            format!("norm bound must be positive, got {}", self.norm_bound)
        })?;
        check_multiplier(self.noise_multiplier)?;
        if let Some(s) = self.s {
            ensure(s >= 1 && s <= d, || {
                format!("sparsity must satisfy 1 <= s <= d = {d}, got {s}")
            })?;
        }
        if let Some(b0) = &self.beta0 {
            ensure(b0.len() == d, || {
                format!("beta0 has length {}, expected {d}", b0.len())
            })?;
            ensure(b0.iter().all(|v| v.is_finite()), || "beta0 must be finite".into())?;
        }
        if self.budget.delta() == 0.0 {
            return Err(Error::unsupported("private regression requires delta > 0"));
        }
        Ok(())
    }

    /// Radius actually used, and a warning when it had to be capped.
    fn effective_radius(&self) -> (f64, Option<String>) {
        if self.radius > self.norm_bound {
            let msg = format!(
                "radius {} exceeds the norm bound {}; using {}",
                self.radius, self.norm_bound, self.norm_bound
            );
            (self.norm_bound, Some(msg))
        } else {
            (self.radius, None)
        }
    }
}

/// Problem constants used to derive default tuning parameters.
///
/// `l` bounds the (restricted) design covariance, `c0` the norm of β, `cx`
/// the design rows, and `rho` scales the working sparsity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryConstants {
    pub l: f64,
    pub c0: f64,
    pub cx: f64,
    pub rho: f64,
}

impl Default for TheoryConstants {
    fn default() -> Self {
        TheoryConstants {
            l: 1.0,
            c0: 1.0,
            cx: 1.0,
            rho: 2.0,
        }
    }
}

impl TheoryConstants {
    /// Response clamp `σ√(2 ln n)`.
    pub fn response_truncation(sigma: f64, n: usize) -> Result<Truncation> {
        ensure(sigma.is_finite() && sigma > 0.0, || format!("sigma must be positive, got {sigma}"))?;
        ensure(n >= 2, || "n must be at least 2".into())?;
        Truncation::symmetric(sigma * (2.0 * (n as f64).ln()).sqrt())
    }

    /// Smallest B that keeps the gradient step private: `4(R + c₀cₓ)cₓ`,
    /// divided by `√s` for the sparse estimator.
    pub fn gradient_bound(&self, truncation: &Truncation, s: Option<usize>) -> f64 {
        let b = 4.0 * (truncation.max_abs() + self.c0 * self.cx) * self.cx;
        match s {
            Some(s) => b / (s as f64).sqrt(),
            None => b,
        }
    }

    /// Working sparsity `⌈ρL⁴s*⌉`.
    pub fn working_sparsity(&self, s_star: usize) -> usize {
        (self.rho * self.l.powi(4) * s_star as f64).ceil().max(1.0) as usize
    }

    /// Dense defaults: η⁰ = d/(2L), T = ⌈8L² ln(c₀²n)⌉, C = c₀, β⁰ = 0.
    pub fn dense_config(
        &self,
        n: usize,
        d: usize,
        truncation: Truncation,
        budget: PrivacyBudget,
        seed: Seed,
    ) -> RegressionConfig {
        let iterations = (8.0 * self.l * self.l * (self.c0 * self.c0 * n as f64).ln()).ceil().max(1.0) as usize;
        let mut cfg = RegressionConfig::new(
            d as f64 / (2.0 * self.l),
            iterations,
            truncation,
            self.c0,
            self.gradient_bound(&truncation, None),
            budget,
            seed,
        );
        cfg.norm_bound = self.c0;
        cfg
    }

    /// Sparse defaults: s = ⌈ρL⁴s*⌉, η⁰ = s/(6L), T = ⌈ρL² ln(8c₀²Ln)⌉, C = c₀.
    pub fn sparse_config(
        &self,
        n: usize,
        s_star: usize,
        truncation: Truncation,
        budget: PrivacyBudget,
        seed: Seed,
    ) -> RegressionConfig {
        self.sparse_config_with(n, self.working_sparsity(s_star), truncation, budget, seed)
    }

    /// Sparse defaults for an explicitly chosen working sparsity.
    pub fn sparse_config_with(
        &self,
        n: usize,
        s: usize,
        truncation: Truncation,
        budget: PrivacyBudget,
        seed: Seed,
    ) -> RegressionConfig {
        let iterations = (self.rho * self.l * self.l * (8.0 * self.c0 * self.c0 * self.l * n as f64).ln())
            .ceil()
            .max(1.0) as usize;
        let mut cfg = RegressionConfig::new(
            s as f64 / (6.0 * self.l),
            iterations,
            truncation,
            self.c0,
            self.gradient_bound(&truncation, Some(s)),
            budget,
            seed,
        )
        .sparse(s);
        cfg.norm_bound = self.c0;
        cfg
    }
}

/// Iterates and objective values of one run, β⁰ included.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub betas: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
}

/// (1/n) Σ (yᵢ − xᵢᵀβ)².
pub fn least_squares_loss(data: &RegressionData, beta: &[f64]) -> Result<f64> {
    check_dim(data, beta)?;
    Ok(loss_unchecked(data, beta))
}

fn loss_unchecked(data: &RegressionData, beta: &[f64]) -> f64 {
    let total: f64 = data
        .x()
        .rows()
        .zip(data.y())
        .map(|(x, y)| (y - dot(x, beta)).powi(2))
        .sum();
    total / data.n() as f64
}

/// (1/n) Σ (xᵢᵀβ − clamp(yᵢ, r)) xᵢ, half the loss gradient when no clamp binds.
pub fn truncated_half_gradient(data: &RegressionData, beta: &[f64], r: f64) -> Result<Vec<f64>> {
    check_dim(data, beta)?;
    Ok(half_gradient_within(data, beta, &Truncation::symmetric(r)?))
}

pub(crate) fn half_gradient_within(data: &RegressionData, beta: &[f64], t: &Truncation) -> Vec<f64> {
    let mut g = vec![0.0; data.d()];
    for (x, y) in data.x().rows().zip(data.y()) {
        let resid = dot(x, beta) - t.clamp(*y);
        g.iter_mut().zip(x).for_each(|(gj, xj)| *gj += resid * xj);
    }
    let n = data.n() as f64;
    g.iter_mut().for_each(|gj| *gj /= n);
    g
}

fn check_dim(data: &RegressionData, beta: &[f64]) -> Result<()> {
    ensure(beta.len() == data.d(), || {
        format!("beta has length {}, data has dimension {}", beta.len(), data.d())
    })
}

/// Per-coordinate variance of the gradient noise:
/// `(η⁰)² · 2B² · ln(2T/δ) / (n² (ε/T)²)`.
pub fn gradient_noise_variance(eta0: f64, b: f64, iterations: usize, n: usize, budget: PrivacyBudget) -> Result<f64> {
    ensure(iterations >= 1 && n >= 1, || "iterations and n must be positive".into())?;
    if budget.delta() == 0.0 {
        return Err(Error::unsupported("gradient noise requires delta > 0"));
    }
    let t = iterations as f64;
    let eps_t = budget.epsilon() / t;
    let n = n as f64;
    Ok(eta0 * eta0 * 2.0 * b * b * (2.0 * t / budget.delta()).ln() / (n * n * eps_t * eps_t))
}

/// Noisy projected gradient descent.
pub fn private_linear_regression(data: &RegressionData, cfg: &RegressionConfig) -> Result<(Estimate, Option<TraceRecord>)> {
    ensure(cfg.s.is_none(), || {
        "the dense estimator takes no sparsity; use the sparse estimator".into()
    })?;
    run(data, cfg, Variant::Gaussian)
}

/// Noisy iterative hard thresholding; the output has at most `s` non-zeros.
pub fn private_sparse_regression(data: &RegressionData, cfg: &RegressionConfig) -> Result<(Estimate, Option<TraceRecord>)> {
    ensure(cfg.s.is_some(), || "the sparse estimator needs a sparsity s".into())?;
    run(data, cfg, Variant::Peeling)
}

#[derive(Clone, Copy)]
enum Variant {
    Gaussian,
    Peeling,
}

fn run(data: &RegressionData, cfg: &RegressionConfig, variant: Variant) -> Result<(Estimate, Option<TraceRecord>)> {
    let (n, d) = (data.n(), data.d());
    cfg.validate(d)?;
    let (radius, warning) = cfg.effective_radius();
    let shares = cfg.budget.split(cfg.iterations)?;
    let gaussian_sd = match variant {
        Variant::Gaussian => {
            cfg.noise_multiplier * gradient_noise_variance(cfg.eta0, cfg.b, cfg.iterations, n, cfg.budget)?.sqrt()
        }
        Variant::Peeling => 0.0,
    };
    let lambda = cfg.eta0 * cfg.b / n as f64;

    let mut src = NoiseSource::new(cfg.seed);
    let mut noise = cfg.keep_noise.then(NoiseLedger::new);
    let mut beta = cfg.beta0.clone().unwrap_or_else(|| vec![0.0; d]);
    let mut trace = cfg.keep_trace.then(TraceRecord::default);
    if let Some(tr) = trace.as_mut() {
        tr.losses.push(loss_unchecked(data, &beta));
        tr.betas.push(beta.clone());
    }

    for (t, share) in shares.iter().enumerate() {
        let grad = half_gradient_within(data, &beta, &cfg.truncation);
        let mut half: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b - cfg.eta0 * g).collect();
        match variant {
            Variant::Gaussian => {
                let w: Vec<f64> = (0..d).map(|_| src.gaussian(gaussian_sd)).collect();
                half.iter_mut().zip(&w).for_each(|(h, wj)| *h += wj);
                if let Some(l) = noise.as_mut() {
                    l.push(NoiseRecord {
                        step: t,
                        role: NoiseRole::Gradient,
                        distribution: NoiseDistribution::Gaussian,
                        scale: gaussian_sd,
                        coords: (0..d).collect(),
                        values: w,
                    });
                }
            }
            Variant::Peeling => {
                let s = cfg.s.expect("checked by caller");
                let scale = cfg.noise_multiplier * peeling_scale(lambda, s, *share)?;
                half = peel_with_scale(&mut src, &half, s, scale, t, noise.as_mut())?.1;
            }
        }
        project_l2_ball_in_place(&mut half, radius)?;
        beta = half;
        if let Some(tr) = trace.as_mut() {
            tr.losses.push(loss_unchecked(data, &beta));
            tr.betas.push(beta.clone());
        }
    }

    let label = match variant {
        Variant::Gaussian => "noisy gradient step",
        Variant::Peeling => "peeling step",
    };
    let parts = shares
        .iter()
        .enumerate()
        .map(|(t, b)| BudgetLedger::leaf(format!("{label} {t}"), *b))
        .collect();
    let estimate = Estimate {
        value: beta,
        budget: BudgetLedger::node("regression", cfg.budget, parts),
        noise,
        warnings: warning.into_iter().collect(),
    };
    Ok((estimate, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataMatrix;
    use crate::vector::{norm2, support_size};

    fn budget(eps: f64, delta: f64) -> PrivacyBudget {
        PrivacyBudget::new(eps, delta).unwrap()
    }

    fn data(rows: &[Vec<f64>], y: &[f64]) -> RegressionData {
        RegressionData::new(DataMatrix::from_rows(rows).unwrap(), y.to_vec()).unwrap()
    }

    fn random_data(n: usize, d: usize, seed: u64) -> RegressionData {
        let mut src = NoiseSource::new(Seed(seed));
        let x: Vec<f64> = (0..n * d).map(|_| src.uniform(-1.0, 1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| src.uniform(-1.0, 1.0)).collect();
        RegressionData::new(DataMatrix::new(n, d, x).unwrap(), y).unwrap()
    }

    #[test]
    fn loss_examples() {
        let one = data(&[vec![1.0]], &[2.0]);
        assert_eq!(least_squares_loss(&one, &[0.0]).unwrap(), 4.0);
        let exact = data(&[vec![1.0, 2.0], vec![-1.0, 0.5]], &[5.0, 0.0]);
        assert_eq!(least_squares_loss(&exact, &[1.0, 2.0]).unwrap(), 0.0);
        assert!(least_squares_loss(&exact, &[1.0]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let one = data(&[vec![1.0, 0.0]], &[3.0]);
        assert_eq!(truncated_half_gradient(&one, &[0.0, 0.0], 2.0).unwrap(), vec![-2.0, 0.0]);
        let exact = data(&[vec![1.0, 2.0], vec![-1.0, 0.5]], &[5.0, 0.0]);
        assert_eq!(truncated_half_gradient(&exact, &[1.0, 2.0], 10.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let data = random_data(15, 4, seed);
            let beta = [0.3, -0.2, 0.5, 0.1];
            let g = truncated_half_gradient(&data, &beta, 10.0).unwrap();
            let h = 1e-6;
            for j in 0..4 {
                let mut up = beta;
                let mut down = beta;
                up[j] += h;
                down[j] -= h;
                let fd = (least_squares_loss(&data, &up).unwrap() - least_squares_loss(&data, &down).unwrap()) / (2.0 * h);
                assert!((fd / 2.0 - g[j]).abs() <= 1e-6 * g[j].abs().max(1e-3), "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn variance_formula() {
        let v = gradient_noise_variance(1.0, 1.0, 2, 100, budget(1.0, 0.02)).unwrap();
        let expected = 2.0 * 200f64.ln() * 4.0 / 1e4;
        assert!((v - expected).abs() <= 1e-15);
    }

    #[test]
    fn theory_defaults() {
        let k = TheoryConstants::default();
        let t = TheoryConstants::response_truncation(1.0, 100).unwrap();
        assert!((t.hi() - (2.0 * 100f64.ln()).sqrt()).abs() < 1e-15);
        let dense = k.dense_config(100, 20, t, budget(0.5, 0.01), Seed(1));
        assert_eq!(dense.eta0, 10.0);
        assert_eq!(dense.iterations, (8.0 * 100f64.ln()).ceil() as usize);
        assert_eq!(dense.radius, 1.0);
        assert!((dense.b - 4.0 * (t.hi() + 1.0)).abs() < 1e-12);
        let sparse = k.sparse_config(1000, 20, t, budget(0.5, 0.01), Seed(1));
        assert_eq!(sparse.s, Some(40));
        assert!((sparse.eta0 - 40.0 / 6.0).abs() < 1e-15);
        assert_eq!(sparse.iterations, (2.0 * 8000f64.ln()).ceil() as usize);
        assert!((sparse.b - 4.0 * (t.hi() + 1.0) / 40f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn radius_is_capped_with_warning() {
        let data = random_data(20, 3, 1);
        let mut cfg = RegressionConfig::new(0.5, 3, Truncation::symmetric(1.0).unwrap(), 5.0, 1.0, budget(1.0, 0.1), Seed(2))
            .keep_trace(true);
        cfg.norm_bound = 1.0;
        let (est, trace) = private_linear_regression(&data, &cfg).unwrap();
        assert_eq!(est.warnings.len(), 1);
        assert!(trace.unwrap().betas.iter().all(|b| norm2(b) <= 1.0));
    }

    #[test]
    fn ledger_and_trace_lengths() {
        let data = random_data(30, 6, 3);
        let cfg = RegressionConfig::new(0.5, 7, Truncation::symmetric(1.0).unwrap(), 1.0, 1.0, budget(0.7, 0.03), Seed(4))
            .keep_trace(true)
            .keep_noise(true);
        let (est, trace) = private_linear_regression(&data, &cfg).unwrap();
        assert!(est.budget.is_balanced());
        assert_eq!(est.budget.releases(), 7);
        assert_eq!(est.noise.unwrap().len(), 7);
        let trace = trace.unwrap();
        assert_eq!(trace.betas.len(), 8);
        assert_eq!(trace.losses.len(), 8);

        let sparse = cfg.clone().sparse(2);
        let (est, trace) = private_sparse_regression(&data, &sparse).unwrap();
        assert!(est.budget.is_balanced());
        // s selection rounds plus one output release per iteration
        assert_eq!(est.noise.unwrap().len(), 7 * 3);
        for b in trace.unwrap().betas.iter().skip(1) {
            assert!(support_size(b) <= 2 && norm2(b) <= 1.0);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let data = random_data(10, 3, 5);
        let base = RegressionConfig::new(0.5, 3, Truncation::symmetric(1.0).unwrap(), 1.0, 1.0, budget(1.0, 0.1), Seed(2));
        assert!(private_sparse_regression(&data, &base.clone().sparse(4)).is_err());
        assert!(private_linear_regression(&data, &base.clone().sparse(1)).is_err());
        assert!(private_sparse_regression(&data, &base).is_err());
        let mut pure = base.clone();
        pure.budget = PrivacyBudget::pure(1.0).unwrap();
        assert!(matches!(private_linear_regression(&data, &pure), Err(Error::Unsupported(_))));
        assert!(private_linear_regression(&data, &base.clone().beta0(vec![0.0; 2])).is_err());
    }

    #[test]
    fn zero_noise_descends() {
        let data = random_data(50, 4, 8);
        // XᵀX/n has eigenvalues near 1/3 here, so 0.5 is below the inverse smoothness.
        let cfg = RegressionConfig::new(0.5, 40, Truncation::symmetric(10.0).unwrap(), 5.0, 1.0, budget(1.0, 0.1), Seed(1))
            .noise_multiplier(0.0)
            .keep_trace(true);
        let (_, trace) = private_linear_regression(&data, &cfg).unwrap();
        let losses = trace.unwrap().losses;
        assert!(losses.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }
}
