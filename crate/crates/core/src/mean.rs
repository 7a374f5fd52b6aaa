//! Private mean estimation: Gaussian-perturbed truncated mean, and its sparse
//! counterpart that peels the top coordinates of the truncated mean.

use serde::{Deserialize, Serialize};

use crate::budget::{BudgetLedger, PrivacyBudget};
use crate::data::DataMatrix;
use crate::error::{ensure, Error, Result};
use crate::estimate::{check_multiplier, default_multiplier, Estimate, Truncation};
use crate::mechanisms::peeling_scale;
use crate::noise::{NoiseDistribution, NoiseLedger, NoiseRecord, NoiseRole};
use crate::peeling::peel_with_scale;
use crate::rng::{NoiseSource, Seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanConfig {
    pub truncation: Truncation,
    /// Output sparsity; required by the sparse estimator, rejected by the dense one.
    #[serde(default)]
    pub s: Option<usize>,
    pub budget: PrivacyBudget,
    pub seed: Seed,
    /// Scales every noise draw. 0 gives the non-private counterpart.
    #[serde(default = "default_multiplier")]
    pub noise_multiplier: f64,
    #[serde(default)]
    pub keep_noise: bool,
}

impl MeanConfig {
    pub fn new(truncation: Truncation, budget: PrivacyBudget, seed: Seed) -> Self {
        MeanConfig {
            truncation,
            s: None,
            budget,
            seed,
            noise_multiplier: 1.0,
            keep_noise: false,
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
}

/// Column means after clamping every entry to `[-r, r]`.
pub fn truncated_mean(x: &DataMatrix, r: f64) -> Result<Vec<f64>> {
    Ok(truncated_mean_within(x, &Truncation::symmetric(r)?))
}

/// Column means after clamping every entry to the interval.
pub fn truncated_mean_within(x: &DataMatrix, t: &Truncation) -> Vec<f64> {
    let mut acc = vec![0.0; x.d()];
    for row in x.rows() {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += t.clamp(*v);
        }
    }
    let n = x.n() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Per-coordinate noise variance of the private mean: `4r²d·ln(1/δ) / (n²ε²)`.
pub fn private_mean_variance(n: usize, d: usize, r: f64, budget: PrivacyBudget) -> Result<f64> {
    ensure(n >= 1 && d >= 1, || "n and d must be positive".into())?;
    ensure(r.is_finite() && r > 0.0, || format!("truncation level must be positive, got {r}"))?;
    if budget.delta() == 0.0 {
        return Err(Error::unsupported("the private mean requires delta > 0"));
    }
    let (n, eps) = (n as f64, budget.epsilon());
    Ok(4.0 * r * r * d as f64 * (1.0 / budget.delta()).ln() / (n * n * eps * eps))
}

/// Truncated mean plus isotropic Gaussian noise.
pub fn private_mean(x: &DataMatrix, cfg: &MeanConfig) -> Result<Estimate> {
    ensure(cfg.s.is_none(), || {
        "the dense private mean takes no sparsity; use the sparse estimator".into()
    })?;
    check_multiplier(cfg.noise_multiplier)?;
    let r = cfg.truncation.half_width();
    let variance = private_mean_variance(x.n(), x.d(), r, cfg.budget)?;
    let sd = cfg.noise_multiplier * variance.sqrt();

    let mut value = truncated_mean_within(x, &cfg.truncation);
    let mut src = NoiseSource::new(cfg.seed);
    let noise: Vec<f64> = (0..x.d()).map(|_| src.gaussian(sd)).collect();
    value.iter_mut().zip(&noise).for_each(|(v, w)| *v += w);

    let noise = cfg.keep_noise.then(|| NoiseLedger {
        records: vec![NoiseRecord {
            step: 0,
            role: NoiseRole::Output,
            distribution: NoiseDistribution::Gaussian,
            scale: sd,
            coords: (0..x.d()).collect(),
            values: noise,
        }],
    });
    Ok(Estimate {
        value,
        budget: BudgetLedger::leaf("gaussian mean", cfg.budget),
        noise,
        warnings: Vec::new(),
    })
}

/// Peels the `s` largest coordinates of the truncated mean with sensitivity
/// `2r/n`; the result is exactly `s`-sparse.
pub fn private_sparse_mean(x: &DataMatrix, cfg: &MeanConfig) -> Result<Estimate> {
    let s = cfg.s.ok_or_else(|| Error::invalid("the sparse private mean needs a sparsity s"))?;
    ensure(s >= 1 && s <= x.d(), || {
        format!("sparsity must satisfy 1 <= s <= d = {}, got {s}", x.d())
    })?;
    check_multiplier(cfg.noise_multiplier)?;
    let lambda = 2.0 * cfg.truncation.half_width() / x.n() as f64;
    let scale = cfg.noise_multiplier * peeling_scale(lambda, s, cfg.budget)?;

    let mean = truncated_mean_within(x, &cfg.truncation);
    let mut src = NoiseSource::new(cfg.seed);
    let mut ledger = cfg.keep_noise.then(NoiseLedger::new);
    let (_, value) = peel_with_scale(&mut src, &mean, s, scale, 0, ledger.as_mut())?;
    Ok(Estimate {
        value,
        budget: BudgetLedger::leaf("peeling", cfg.budget),
        noise: ledger,
        warnings: Vec::new(),
    })
}
