//! Empirical membership-inference auditing with tracing attacks.
//!
//! An attack scores a candidate row against an estimator's output. Rows that
//! were in the estimator's sample should score higher than fresh rows from
//! the same distribution; a private estimator keeps the two close. All
//! attacks need the true parameter, so auditing is a simulation tool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::PrivacyBudget;
use crate::data::{DataMatrix, RegressionData};
use crate::error::{ensure, Error, Result};
use crate::estimate::Truncation;
use crate::mean::{private_mean, private_sparse_mean, MeanConfig};
use crate::regression::{private_linear_regression, private_sparse_regression, TheoryConstants};
use crate::rng::{NoiseSource, Seed};
use crate::sim::{gen_mean_data, gen_regression_data, mean_se};

fn check_dims(what: &str, a: usize, b: usize) -> Result<()> {
    ensure(a == b, || format!("{what}: dimension mismatch ({a} vs {b})"))
}

fn check_support(support: &[usize], d: usize) -> Result<()> {
    match support.iter().find(|&&j| j >= d) {
        Some(j) => Err(Error::invalid(format!("support index {j} out of range for d = {d}"))),
        None => Ok(()),
    }
}

/// `⟨x − μ, out⟩`.
pub fn mean_attack(x: &[f64], mu: &[f64], out: &[f64]) -> Result<f64> {
    check_dims("mean attack", x.len(), mu.len())?;
    check_dims("mean attack", x.len(), out.len())?;
    Ok(x.iter().zip(mu).zip(out).map(|((x, m), o)| (x - m) * o).sum())
}

/// `⟨(x − μ)_S, (out − μ)_S⟩` over the index set `S`.
pub fn sparse_mean_attack(x: &[f64], mu: &[f64], support: &[usize], out: &[f64]) -> Result<f64> {
    check_dims("sparse mean attack", x.len(), mu.len())?;
    check_dims("sparse mean attack", x.len(), out.len())?;
    check_support(support, x.len())?;
    Ok(support.iter().map(|&j| (x[j] - mu[j]) * (out[j] - mu[j])).sum())
}

/// `⟨(out − β)_S, (y − xᵀβ)·x_S⟩`, over all coordinates when `support` is `None`.
pub fn regression_attack(y: f64, x: &[f64], beta: &[f64], out: &[f64], support: Option<&[usize]>) -> Result<f64> {
    check_dims("regression attack", x.len(), beta.len())?;
    check_dims("regression attack", x.len(), out.len())?;
    let residual = y - x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
    let term = |j: usize| (out[j] - beta[j]) * residual * x[j];
    Ok(match support {
        Some(s) => {
            check_support(s, x.len())?;
            s.iter().map(|&j| term(j)).sum()
        }
        None => (0..x.len()).map(term).sum(),
    })
}

/// Data handed to an audited estimator.
#[derive(Clone, Debug, PartialEq)]
pub enum AuditSample {
    Mean(DataMatrix),
    Regression(RegressionData),
}

impl AuditSample {
    pub fn n(&self) -> usize {
        match self {
            AuditSample::Mean(x) => x.n(),
            AuditSample::Regression(r) => r.n(),
        }
    }

    pub fn d(&self) -> usize {
        match self {
            AuditSample::Mean(x) => x.d(),
            AuditSample::Regression(r) => r.d(),
        }
    }
}

/// A black-box estimator under audit. Must be deterministic given the seed.
pub trait AuditEstimator: Send + Sync {
    fn fit(&self, sample: &AuditSample, seed: Seed) -> Result<Vec<f64>>;

    /// Whether `fit` may run on several repetitions at once. When false the
    /// auditor runs repetitions one after another.
    fn thread_safe(&self) -> bool {
        true
    }
}

impl<F> AuditEstimator for F
where
    F: Fn(&AuditSample, Seed) -> Result<Vec<f64>> + Send + Sync,
{
    fn fit(&self, sample: &AuditSample, seed: Seed) -> Result<Vec<f64>> {
        self(sample, seed)
    }
}

/// Distribution the audited samples are drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum AuditGenerator {
    /// Independent ±1 coordinates. The mean is zero, or drawn per repetition
    /// from Uniform(−1, 1) when `random_mean` is set.
    SignCube {
        #[serde(default)]
        random_mean: bool,
    },
    /// N(μ, I) rows with Uniform(−10, 10) mean entries, on the first `s_star`
    /// coordinates when given. Sparse instances use the support-restricted attack.
    Gaussian {
        #[serde(default)]
        s_star: Option<usize>,
    },
    /// Uniform design, unit-norm β (on the first `s_star` coordinates when given).
    Regression {
        #[serde(default)]
        s_star: Option<usize>,
        #[serde(default = "unit")]
        sigma: f64,
    },
}

fn unit() -> f64 {
    1.0
}

/// A drawn sample of `2n` rows with its true parameter.
struct Draw {
    sample: AuditSample,
    truth: Vec<f64>,
    support: Option<Vec<usize>>,
}

impl AuditGenerator {
    fn draw(&self, rows: usize, d: usize, seed: Seed) -> Result<Draw> {
        match *self {
            AuditGenerator::SignCube { random_mean } => {
                let mut src = NoiseSource::new(seed);
                let mu: Vec<f64> = (0..d)
                    .map(|_| if random_mean { src.uniform(-1.0, 1.0) } else { 0.0 })
                    .collect();
                let mut values = Vec::with_capacity(rows * d);
                for _ in 0..rows {
                    values.extend(mu.iter().map(|m| if src.open01() < (1.0 + m) / 2.0 { 1.0 } else { -1.0 }));
                }
                Ok(Draw {
                    sample: AuditSample::Mean(DataMatrix::new(rows, d, values)?),
                    truth: mu,
                    support: None,
                })
            }
            AuditGenerator::Gaussian { s_star } => {
                let (x, mu) = gen_mean_data(rows, d, s_star, seed)?;
                Ok(Draw {
                    sample: AuditSample::Mean(x),
                    truth: mu,
                    support: s_star.map(|s| (0..s).collect()),
                })
            }
            AuditGenerator::Regression { s_star, sigma } => {
                let (data, beta) = gen_regression_data(rows, d, s_star, sigma, seed)?;
                Ok(Draw {
                    sample: AuditSample::Regression(data),
                    truth: beta,
                    support: s_star.map(|s| (0..s).collect()),
                })
            }
        }
    }
}

/// Built-in estimators that an audit spec can name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum EstimatorSpec {
    /// Column means of the sample.
    SampleMean,
    /// Output independent of the data.
    Constant {
        #[serde(default)]
        value: f64,
    },
    PrivateMean {
        epsilon: f64,
        delta: f64,
        r: f64,
        #[serde(default = "unit")]
        noise_multiplier: f64,
    },
    PrivateSparseMean {
        epsilon: f64,
        delta: f64,
        r: f64,
        s: usize,
        #[serde(default = "unit")]
        noise_multiplier: f64,
    },
    /// Noisy projected gradient descent with default constants and response
    /// clamp σ√(2 ln n).
    PrivateRegression {
        epsilon: f64,
        delta: f64,
        #[serde(default = "unit")]
        noise_multiplier: f64,
        #[serde(default)]
        constants: TheoryConstants,
    },
    /// Noisy iterative hard thresholding with default constants.
    PrivateSparseRegression {
        epsilon: f64,
        delta: f64,
        s: usize,
        #[serde(default = "unit")]
        noise_multiplier: f64,
        #[serde(default)]
        constants: TheoryConstants,
    },
}

impl EstimatorSpec {
    /// δ of the estimator's budget, if it has one.
    pub fn delta(&self) -> Option<f64> {
        match *self {
            EstimatorSpec::SampleMean | EstimatorSpec::Constant { .. } => None,
            EstimatorSpec::PrivateMean { delta, .. }
            | EstimatorSpec::PrivateSparseMean { delta, .. }
            | EstimatorSpec::PrivateRegression { delta, .. }
            | EstimatorSpec::PrivateSparseRegression { delta, .. } => Some(delta),
        }
    }
}

impl AuditEstimator for EstimatorSpec {
    fn fit(&self, sample: &AuditSample, seed: Seed) -> Result<Vec<f64>> {
        let wrong = || Error::invalid("estimator does not match the generated data");
        match (self, sample) {
            (EstimatorSpec::SampleMean, AuditSample::Mean(x)) => Ok(x.column_means()),
            (EstimatorSpec::Constant { value }, s) => Ok(vec![*value; s.d()]),
            (EstimatorSpec::PrivateMean { epsilon, delta, r, noise_multiplier }, AuditSample::Mean(x)) => {
                let cfg = MeanConfig::new(Truncation::symmetric(*r)?, PrivacyBudget::new(*epsilon, *delta)?, seed)
                    .noise_multiplier(*noise_multiplier);
                Ok(private_mean(x, &cfg)?.value)
            }
            (
                EstimatorSpec::PrivateSparseMean {
                    epsilon,
                    delta,
                    r,
                    s,
                    noise_multiplier,
                },
                AuditSample::Mean(x),
            ) => {
                let cfg = MeanConfig::new(Truncation::symmetric(*r)?, PrivacyBudget::new(*epsilon, *delta)?, seed)
                    .sparse(*s)
                    .noise_multiplier(*noise_multiplier);
                Ok(private_sparse_mean(x, &cfg)?.value)
            }
            (
                EstimatorSpec::PrivateRegression {
                    epsilon,
                    delta,
                    noise_multiplier,
                    constants,
                },
                AuditSample::Regression(data),
            ) => {
                let t = TheoryConstants::response_truncation(1.0, data.n())?;
                let cfg = constants
                    .dense_config(data.n(), data.d(), t, PrivacyBudget::new(*epsilon, *delta)?, seed)
                    .noise_multiplier(*noise_multiplier);
                Ok(private_linear_regression(data, &cfg)?.0.value)
            }
            (
                EstimatorSpec::PrivateSparseRegression {
                    epsilon,
                    delta,
                    s,
                    noise_multiplier,
                    constants,
                },
                AuditSample::Regression(data),
            ) => {
                let t = TheoryConstants::response_truncation(1.0, data.n())?;
                let cfg = constants
                    .sparse_config_with(data.n(), *s, t, PrivacyBudget::new(*epsilon, *delta)?, seed)
                    .noise_multiplier(*noise_multiplier);
                Ok(private_sparse_regression(data, &cfg)?.0.value)
            }
            _ => Err(wrong()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub generator: AuditGenerator,
    pub n: usize,
    pub d: usize,
    pub reps: usize,
    pub seed: u64,
    /// Noise scale of the data, used in the exceedance threshold.
    #[serde(default = "unit")]
    pub sigma: f64,
    /// Exceedance threshold; defaults to σ²√(8d·ln(1/δ)).
    #[serde(default)]
    pub threshold: Option<f64>,
    /// δ used in the default threshold; defaults to the estimator's δ, else 1/n.
    #[serde(default)]
    pub threshold_delta: Option<f64>,
    /// Include every row's score in the report.
    #[serde(default)]
    pub keep_scores: bool,
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n == 0 {
            problems.push("n: must be positive".to_string());
        }
        if self.d == 0 {
            problems.push("d: must be positive".into());
        }
        if self.reps < 2 {
            problems.push("reps: at least 2 are needed for a standard error".into());
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            problems.push(format!("sigma: must be positive, got {}", self.sigma));
        }
        if let Some(t) = self.threshold {
            if !t.is_finite() {
                problems.push("threshold: must be finite".into());
            }
        }
        if let Some(delta) = self.threshold_delta {
            if !(delta > 0.0 && delta < 1.0) {
                problems.push(format!("threshold_delta: must lie in (0, 1), got {delta}"));
            }
        }
        match &self.generator {
            AuditGenerator::Gaussian { s_star: Some(s) } | AuditGenerator::Regression { s_star: Some(s), .. }
                if *s == 0 || *s > self.d =>
            {
                problems.push(format!("generator.s_star: must lie in 1..={}, got {s}", self.d))
            }
            AuditGenerator::Regression { sigma, .. } if !(sigma.is_finite() && *sigma >= 0.0) => {
                problems.push("generator.sigma: must be non-negative".into())
            }
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }

    fn resolved_threshold(&self, estimator_delta: Option<f64>) -> f64 {
        self.threshold.unwrap_or_else(|| {
            let delta = self
                .threshold_delta
                .or(estimator_delta)
                .unwrap_or(1.0 / self.n.max(2) as f64);
            self.sigma * self.sigma * (8.0 * self.d as f64 * (1.0 / delta).ln()).sqrt()
        })
    }
}

/// An audit configuration paired with a built-in estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSpec {
    pub config: AuditConfig,
    pub estimator: EstimatorSpec,
}

impl AuditSpec {
    pub fn run(&self) -> Result<AttackReport> {
        audit_builtin(&self.config, &self.estimator)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    InSample,
    OutOfSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredRow {
    pub rep: usize,
    pub row: usize,
    pub label: Membership,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepSummary {
    pub rep: usize,
    pub seed: u64,
    pub mean_in: f64,
    pub sd_in: f64,
    pub mean_out: f64,
    pub sd_out: f64,
    pub exceed_in: usize,
    pub exceed_out: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub config: AuditConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorSpec>,
    pub threshold: f64,
    pub reps: Vec<RepSummary>,
    /// Means and standard deviations over all scored rows.
    pub mean_in: f64,
    pub sd_in: f64,
    pub mean_out: f64,
    pub sd_out: f64,
    /// Standard error of the out-of-sample mean, from per-repetition means.
    pub se_out: f64,
    /// Mean per-repetition gap (in − out) divided by its standard error.
    pub z: f64,
    pub exceed_in: usize,
    pub exceed_out: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<ScoredRow>>,
}

impl AttackReport {
    /// Out-of-sample mean lies within `k` standard errors of zero.
    pub fn out_of_sample_centered(&self, k: f64) -> bool {
        self.mean_out.abs() <= k * self.se_out
    }
}

struct RepScores {
    summary: RepSummary,
    scores_in: Vec<f64>,
    scores_out: Vec<f64>,
}

/// Audits a built-in estimator and echoes it in the report.
pub fn audit_builtin(cfg: &AuditConfig, estimator: &EstimatorSpec) -> Result<AttackReport> {
    let mut report = run_membership_audit(cfg, estimator, estimator.delta())?;
    report.estimator = Some(estimator.clone());
    Ok(report)
}

/// Runs `cfg.reps` independent repetitions. Each draws `2n` rows, fits the
/// estimator on the first `n`, and scores those against the `n` held out.
/// `estimator_delta` feeds the default threshold.
pub fn run_membership_audit(
    cfg: &AuditConfig,
    estimator: &dyn AuditEstimator,
    estimator_delta: Option<f64>,
) -> Result<AttackReport> {
    cfg.validate()?;
    let threshold = cfg.resolved_threshold(estimator_delta);
    let one = |rep: usize| run_rep(cfg, estimator, threshold, rep).map_err(|e| Error::Repetition { rep, source: Box::new(e) });
    let reps: Vec<RepScores> = if estimator.thread_safe() {
        (0..cfg.reps).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..cfg.reps).map(one).collect::<Result<_>>()?
    };

    let all_in: Vec<f64> = reps.iter().flat_map(|r| r.scores_in.iter().copied()).collect();
    let all_out: Vec<f64> = reps.iter().flat_map(|r| r.scores_out.iter().copied()).collect();
    let gaps: Vec<f64> = reps.iter().map(|r| r.summary.mean_in - r.summary.mean_out).collect();
    let outs: Vec<f64> = reps.iter().map(|r| r.summary.mean_out).collect();
    let (gap, gap_se) = mean_se(&gaps);
    let (_, se_out) = mean_se(&outs);
    let z = if gap_se > 0.0 {
        gap / gap_se
    } else if gap == 0.0 {
        0.0
    } else {
        gap.signum() * f64::INFINITY
    };
    let scores = cfg.keep_scores.then(|| {
        reps.iter()
            .enumerate()
            .flat_map(|(rep, r)| {
                let ins = r.scores_in.iter().enumerate().map(move |(row, &score)| ScoredRow {
                    rep,
                    row,
                    label: Membership::InSample,
                    score,
                });
                let outs = r.scores_out.iter().enumerate().map(move |(row, &score)| ScoredRow {
                    rep,
                    row,
                    label: Membership::OutOfSample,
                    score,
                });
                ins.chain(outs)
            })
            .collect()
    });
    Ok(AttackReport {
        config: cfg.clone(),
        estimator: None,
        threshold,
        mean_in: mean_se(&all_in).0,
        sd_in: sd(&all_in),
        mean_out: mean_se(&all_out).0,
        sd_out: sd(&all_out),
        se_out,
        z,
        exceed_in: reps.iter().map(|r| r.summary.exceed_in).sum(),
        exceed_out: reps.iter().map(|r| r.summary.exceed_out).sum(),
        reps: reps.into_iter().map(|r| r.summary).collect(),
        scores,
    })
}

fn sd(v: &[f64]) -> f64 {
    let (_, se) = mean_se(v);
    se * (v.len() as f64).sqrt()
}

fn run_rep(cfg: &AuditConfig, estimator: &dyn AuditEstimator, threshold: f64, rep: usize) -> Result<RepScores> {
    let seed = Seed(cfg.seed).derive(rep as u64);
    let draw = cfg.generator.draw(2 * cfg.n, cfg.d, seed.derive(0))?;
    let inside: Vec<usize> = (0..cfg.n).collect();
    let outside: Vec<usize> = (cfg.n..2 * cfg.n).collect();
    let (train, held_out) = match &draw.sample {
        AuditSample::Mean(x) => (
            AuditSample::Mean(x.select_rows(&inside)?),
            AuditSample::Mean(x.select_rows(&outside)?),
        ),
        AuditSample::Regression(r) => (
            AuditSample::Regression(r.select_rows(&inside)?),
            AuditSample::Regression(r.select_rows(&outside)?),
        ),
    };
    let out = estimator.fit(&train, seed.derive(1))?;
    ensure(out.len() == cfg.d, || {
        format!("estimator returned {} coordinates, expected {}", out.len(), cfg.d)
    })?;
    ensure(out.iter().all(|v| v.is_finite()), || "estimator returned a non-finite value".into())?;
    let score_all = |s: &AuditSample| -> Result<Vec<f64>> {
        let support = draw.support.as_deref();
        match s {
            AuditSample::Mean(x) => x
                .rows()
                .map(|row| match support {
                    Some(sup) => sparse_mean_attack(row, &draw.truth, sup, &out),
                    None => mean_attack(row, &draw.truth, &out),
                })
                .collect(),
            AuditSample::Regression(r) => (0..r.n())
                .map(|i| regression_attack(r.y()[i], r.x().row(i), &draw.truth, &out, support))
                .collect(),
        }
    };
    let scores_in = score_all(&train)?;
    let scores_out = score_all(&held_out)?;
    let (mean_in, _) = mean_se(&scores_in);
    let (mean_out, _) = mean_se(&scores_out);
    let summary = RepSummary {
        rep,
        seed: seed.value(),
        mean_in,
        sd_in: sd(&scores_in),
        mean_out,
        sd_out: sd(&scores_out),
        exceed_in: scores_in.iter().filter(|s| **s > threshold).count(),
        exceed_out: scores_out.iter().filter(|s| **s > threshold).count(),
    };
    Ok(RepScores {
        summary,
        scores_in,
        scores_out,
    })
}
