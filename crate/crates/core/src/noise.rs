//! Recorded noise draws.
//!
//! Estimators optionally keep every noise vector they add so tests can replay
//! deterministic consequences of the selection rule (the peeling accuracy
//! inequality) against the exact draws.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    Laplace,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseRole {
    /// Noise added to scores during round `round` of a peeling selection.
    Selection { round: usize },
    /// Noise added to the released coordinates after selection.
    Output,
    /// Noise added to a gradient step.
    Gradient,
}

/// One noise vector: `values[k]` was added to coordinate `coords[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    /// Outer iteration (0 for single-shot estimators).
    pub step: usize,
    pub role: NoiseRole,
    pub distribution: NoiseDistribution,
    /// Laplace scale or Gaussian standard deviation.
    pub scale: f64,
    pub coords: Vec<usize>,
    pub values: Vec<f64>,
}

impl NoiseRecord {
    pub fn max_abs(&self) -> f64 {
        crate::vector::norm_inf(&self.values)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseLedger {
    pub records: Vec<NoiseRecord>,
}

impl NoiseLedger {
    pub fn new() -> Self {
        NoiseLedger::default()
    }

    pub fn push(&mut self, record: NoiseRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Selection-noise records of outer iteration `step`, in round order.
    pub fn selection_rounds(&self, step: usize) -> impl Iterator<Item = &NoiseRecord> {
        self.records
            .iter()
            .filter(move |r| r.step == step && matches!(r.role, NoiseRole::Selection { .. }))
    }

    pub fn with_role(&self, role: NoiseRole) -> impl Iterator<Item = &NoiseRecord> {
        self.records.iter().filter(move |r| r.role == role)
    }
}
