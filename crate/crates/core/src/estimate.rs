//! Types shared by the estimators: the truncation interval and the released
//! estimate with its budget ledger.

use serde::{Deserialize, Serialize};

use crate::budget::BudgetLedger;
use crate::error::{ensure, Result};
use crate::noise::NoiseLedger;

/// Clamp interval applied to data entries (mean) or responses (regression).
///
/// `Truncation::symmetric(r)` is `[-r, r]`. Asymmetric intervals come from the
/// private quantile rule; formulas written for a radius use half the width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    lo: f64,
    hi: f64,
}

impl Truncation {
    pub fn symmetric(r: f64) -> Result<Self> {
        ensure(r.is_finite() && r > 0.0, || {
            format!("truncation level must be positive and finite, got {r}")
        })?;
        Ok(Truncation { lo: -r, hi: r })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        ensure(lo.is_finite() && hi.is_finite() && lo < hi, || {
            format!("truncation interval needs finite lo < hi, got [{lo}, {hi}]")
        })?;
        Ok(Truncation { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Half the interval width; equals `r` for a symmetric interval.
    pub fn half_width(&self) -> f64 {
        (self.hi - self.lo) / 2.0
    }

    /// Largest magnitude a clamped value can have.
    pub fn max_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }
}

/// A private release together with its accounting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Vec<f64>,
    pub budget: BudgetLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseLedger>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Validates a noise multiplier: 1 is the calibrated mechanism, 0 disables
/// noise entirely (the non-private counterpart).
pub(crate) fn check_multiplier(m: f64) -> Result<()> {
    ensure(m.is_finite() && m >= 0.0, || {
        format!("noise multiplier must be finite and non-negative, got {m}")
    })
}

pub(crate) fn default_multiplier() -> f64 {
    1.0
}
