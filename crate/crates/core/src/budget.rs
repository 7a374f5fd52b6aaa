//! (ε, δ) budgets and additive composition.
//!
//! Budgets compose by adding both parameters. Splitting is arranged so that
//! composing the parts with a left-to-right floating-point sum reproduces the
//! parent budget bit for bit: all parts but the last are the rounded quotient
//! (the one before the last may be an ulp lower), and the last part is the
//! float that closes the sum.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// A privacy budget: ε > 0 and 0 ≤ δ < 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBudget")]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

#[derive(Deserialize)]
struct RawBudget {
    epsilon: f64,
    delta: f64,
}

impl TryFrom<RawBudget> for PrivacyBudget {
    type Error = Error;

    fn try_from(raw: RawBudget) -> Result<Self> {
        PrivacyBudget::new(raw.epsilon, raw.delta)
    }
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        ensure(epsilon.is_finite() && epsilon > 0.0, || {
            format!("epsilon must be positive and finite, got {epsilon}")
        })?;
        ensure((0.0..1.0).contains(&delta), || {
            format!("delta must lie in [0, 1), got {delta}")
        })?;
        Ok(PrivacyBudget { epsilon, delta })
    }

    /// Pure ε-DP budget.
    pub fn pure(epsilon: f64) -> Result<Self> {
        PrivacyBudget::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Splits into `k` parts of (ε/k, δ/k).
    ///
    /// The final part absorbs the rounding residue (at most a few ulps) so that
    /// [`compose`] of the result returns `self` exactly.
    pub fn split(&self, k: usize) -> Result<Vec<PrivacyBudget>> {
        ensure(k >= 1, || "cannot split a budget into zero parts".into())?;
        let mut eps = vec![self.epsilon / k as f64; k - 1];
        let mut delta = vec![self.delta / k as f64; k - 1];
        let eps_last = close_sum(self.epsilon, &mut eps)?;
        let delta_last = close_sum(self.delta, &mut delta)?;
        eps.push(eps_last);
        delta.push(delta_last);
        eps.into_iter()
            .zip(delta)
            .map(|(e, d)| PrivacyBudget::new(e, d))
            .collect()
    }

    /// Splits into (fraction·ε, fraction·δ) and the exact remainder.
    pub fn split_fraction(&self, fraction: f64) -> Result<(PrivacyBudget, PrivacyBudget)> {
        check_fraction(fraction)?;
        let mut eps = [self.epsilon * fraction];
        let mut delta = [self.delta * fraction];
        let eps_rest = close_sum(self.epsilon, &mut eps)?;
        let delta_rest = close_sum(self.delta, &mut delta)?;
        Ok((
            PrivacyBudget::new(eps[0], delta[0])?,
            PrivacyBudget::new(eps_rest, delta_rest)?,
        ))
    }

    /// Splits ε only: returns (fraction·ε, 0) and (remaining ε, δ).
    ///
    /// Used when the first stage is a pure-DP mechanism that has no use for δ.
    pub fn split_epsilon(&self, fraction: f64) -> Result<(PrivacyBudget, PrivacyBudget)> {
        check_fraction(fraction)?;
        let mut eps = [self.epsilon * fraction];
        let rest = close_sum(self.epsilon, &mut eps)?;
        Ok((PrivacyBudget::pure(eps[0])?, PrivacyBudget::new(rest, self.delta)?))
    }

    /// Bitwise equality of both parameters.
    pub fn same_as(&self, other: &PrivacyBudget) -> bool {
        self.epsilon.to_bits() == other.epsilon.to_bits()
            && self.delta.to_bits() == other.delta.to_bits()
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    ensure(fraction > 0.0 && fraction < 1.0, || {
        format!("budget fraction must lie in (0, 1), got {fraction}")
    })
}

/// Returns the float `r` with `partial + r == total` under IEEE addition, or
/// `None` when rounding skips over `total`.
fn closing_term(total: f64, partial: f64) -> Option<f64> {
    if partial >= total {
        return None;
    }
    let mut r = total - partial;
    for _ in 0..64 {
        let sum = partial + r;
        if sum == total {
            return Some(r);
        }
        r = if sum > total { r.next_down() } else { r.next_up() };
    }
    None
}

/// Final addend that makes the left-to-right sum of `leading` and it equal
/// `total` exactly.
///
/// When the partial sum sits on a finer grid than `total`, ties-to-even can
/// make every candidate miss; the last leading term is then lowered by one
/// ulp and the search repeated.
fn close_sum(total: f64, leading: &mut [f64]) -> Result<f64> {
    if total == 0.0 {
        return Ok(0.0);
    }
    for _ in 0..64 {
        let partial = leading.iter().fold(0.0, |acc, x| acc + x);
        if let Some(r) = closing_term(total, partial) {
            return Ok(r);
        }
        match leading.last_mut() {
            Some(last) if *last > 0.0 => *last = last.next_down(),
            _ => break,
        }
    }
    Err(Error::invalid(format!("could not close budget sum to {total}")))
}

/// Additive composition: (Σεᵢ, Σδᵢ), summed left to right.
pub fn compose(parts: &[PrivacyBudget]) -> Result<PrivacyBudget> {
    ensure(!parts.is_empty(), || "cannot compose an empty list of budgets".into())?;
    let (eps, delta) = parts
        .iter()
        .fold((0.0, 0.0), |(e, d), p| (e + p.epsilon, d + p.delta));
    PrivacyBudget::new(eps, delta)
}

/// Tree-shaped record of how a budget was divided among private releases.
///
/// A node with no parts is a single release. A node with parts is balanced
/// when its parts compose exactly to its own budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub label: String,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<BudgetLedger>,
}

impl BudgetLedger {
    pub fn leaf(label: impl Into<String>, budget: PrivacyBudget) -> Self {
        BudgetLedger {
            label: label.into(),
            epsilon: budget.epsilon,
            delta: budget.delta,
            parts: Vec::new(),
        }
    }

    pub fn node(label: impl Into<String>, budget: PrivacyBudget, parts: Vec<BudgetLedger>) -> Self {
        BudgetLedger {
            parts,
            ..BudgetLedger::leaf(label, budget)
        }
    }

    /// Sum of the immediate parts (or the node's own budget for a leaf).
    pub fn consumed(&self) -> (f64, f64) {
        if self.parts.is_empty() {
            return (self.epsilon, self.delta);
        }
        self.parts
            .iter()
            .fold((0.0, 0.0), |(e, d), p| (e + p.epsilon, d + p.delta))
    }

    /// True when every internal node's parts sum exactly to that node's budget.
    pub fn is_balanced(&self) -> bool {
        let (e, d) = self.consumed();
        e.to_bits() == self.epsilon.to_bits()
            && d.to_bits() == self.delta.to_bits()
            && self.parts.iter().all(BudgetLedger::is_balanced)
    }

    /// Number of leaf releases.
    pub fn releases(&self) -> usize {
        if self.parts.is_empty() {
            1
        } else {
            self.parts.iter().map(BudgetLedger::releases).sum()
        }
    }
}
