//! Private top-s selection by peeling.
//!
//! Each of `s` rounds perturbs the magnitudes of the still-unselected
//! coordinates with fresh Laplace noise and appends the noisy argmax to the
//! selected set. The selected entries are released with one more fresh
//! Laplace vector; everything else is zero.
//!
//! Noise is drawn only for coordinates still in play, in ascending index
//! order, and the output noise in ascending order of the selected indices.
//! Ties in the noisy argmax go to the lowest index.

use serde::{Deserialize, Serialize};

use crate::budget::PrivacyBudget;
use crate::error::{ensure, Result};
use crate::mechanisms::peeling_scale;
use crate::noise::{NoiseDistribution, NoiseLedger, NoiseRecord, NoiseRole};
use crate::rng::{NoiseSource, Seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeelingResult {
    /// Selected indices in the order they were peeled.
    pub selected: Vec<usize>,
    /// `v` on the selected set plus output noise, zero elsewhere.
    pub output: Vec<f64>,
    /// Laplace scale used for every draw.
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger: Option<NoiseLedger>,
}

/// Runs the peeling selector on `v`.
///
/// `lambda` is the ℓ∞ sensitivity of `v` between adjacent datasets. The whole
/// `budget` is spent by this call; `lambda = 0` gives exact top-s selection.
pub fn peel(
    v: &[f64],
    s: usize,
    budget: PrivacyBudget,
    lambda: f64,
    seed: Seed,
    keep_ledger: bool,
) -> Result<PeelingResult> {
    let mut src = NoiseSource::new(seed);
    let mut ledger = keep_ledger.then(NoiseLedger::new);
    let scale = peeling_scale(lambda, s, budget)?;
    let (selected, output) = peel_with_scale(&mut src, v, s, scale, 0, ledger.as_mut())?;
    Ok(PeelingResult {
        selected,
        output,
        scale,
        ledger,
    })
}

/// Peeling with an explicit Laplace scale, drawing from a caller-owned stream.
///
/// Used by estimators that run several peeling rounds under one generator;
/// `step` tags the ledger records with the outer iteration.
pub(crate) fn peel_with_scale(
    src: &mut NoiseSource,
    v: &[f64],
    s: usize,
    scale: f64,
    step: usize,
    mut ledger: Option<&mut NoiseLedger>,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let d = v.len();
    ensure(s >= 1, || "sparsity must be at least 1".into())?;
    ensure(s <= d, || format!("sparsity {s} exceeds dimension {d}"))?;
    ensure(v.iter().all(|x| x.is_finite()), || "peeling input must be finite".into())?;
    ensure(scale.is_finite() && scale >= 0.0, || format!("invalid laplace scale {scale}"))?;

    let mut taken = vec![false; d];
    let mut selected = Vec::with_capacity(s);
    for round in 0..s {
        let mut best: Option<(usize, f64)> = None;
        let keep = ledger.is_some();
        let mut coords = Vec::new();
        let mut values = Vec::new();
        for j in (0..d).filter(|&j| !taken[j]) {
            let w = src.laplace(scale);
            if keep {
                coords.push(j);
                values.push(w);
            }
            let score = v[j].abs() + w;
            match best {
                Some((_, b)) if score <= b => {}
                _ => best = Some((j, score)),
            }
        }
        let (j, _) = best.expect("s <= d leaves a candidate in every round");
        taken[j] = true;
        selected.push(j);
        if let Some(l) = ledger.as_deref_mut() {
            l.push(NoiseRecord {
                step,
                role: NoiseRole::Selection { round },
                distribution: NoiseDistribution::Laplace,
                scale,
                coords,
                values,
            });
        }
    }

    let mut output = vec![0.0; d];
    let mut sorted = selected.clone();
    sorted.sort_unstable();
    let mut out_noise = Vec::with_capacity(s);
    for &j in &sorted {
        let w = src.laplace(scale);
        output[j] = v[j] + w;
        out_noise.push(w);
    }
    if let Some(l) = ledger {
        l.push(NoiseRecord {
            step,
            role: NoiseRole::Output,
            distribution: NoiseDistribution::Laplace,
            scale,
            coords: sorted,
            values: out_noise,
        });
    }
    Ok((selected, output))
}

/// Σᵢ ‖wᵢ‖∞² over the selection rounds of outer iteration `step`.
pub fn selection_noise_energy(ledger: &NoiseLedger, step: usize) -> f64 {
    ledger
        .selection_rounds(step)
        .map(|r| r.max_abs().powi(2))
        .sum()
}

/// Whether ‖v_{R₂}‖² ≤ (1 + c)‖v_{R₁}‖² + 4(1 + 1/c)·`noise_energy`.
///
/// A relative slack of 1e-12 absorbs rounding in the sums.
pub fn accuracy_inequality_holds(v: &[f64], r1: &[usize], r2: &[usize], c: f64, noise_energy: f64) -> bool {
    let sq = |idx: &[usize]| idx.iter().map(|&j| v[j] * v[j]).sum::<f64>();
    let lhs = sq(r2);
    let rhs = (1.0 + c) * sq(r1) + 4.0 * (1.0 + 1.0 / c) * noise_energy;
    lhs <= rhs + 1e-12 * (lhs.abs() + rhs.abs())
}

/// Checks the peeling accuracy inequality against the recorded noise.
///
/// The family checked is every single-element pair (R₁ ⊆ S, R₂ ⊆ Sᶜ) plus, for
/// each size k, the extremal pair made of the k smallest selected magnitudes
/// and the k largest unselected magnitudes. The extremal pair maximizes the
/// left side and minimizes the right side at its size, so passing it implies
/// the inequality for every pair of that size.
pub fn verify_peeling_accuracy(v: &[f64], result: &PeelingResult, c: f64) -> Result<bool> {
    let ledger = result.ledger.as_ref().ok_or_else(|| {
        crate::Error::InvalidArgument("peeling result was produced without a noise ledger".into())
    })?;
    ensure(c > 0.0 && c.is_finite(), || format!("c must be positive, got {c}"))?;
    ensure(result.output.len() == v.len(), || "result dimension does not match v".into())?;
    let energy = selection_noise_energy(ledger, 0);

    let mut in_s = vec![false; v.len()];
    result.selected.iter().for_each(|&j| in_s[j] = true);
    let mut sel: Vec<usize> = result.selected.clone();
    let mut rest: Vec<usize> = (0..v.len()).filter(|&j| !in_s[j]).collect();

    for &a in &sel {
        for &b in &rest {
            if !accuracy_inequality_holds(v, &[a], &[b], c, energy) {
                return Ok(false);
            }
        }
    }

    sel.sort_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()));
    rest.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
    for k in 1..=sel.len().min(rest.len()) {
        if !accuracy_inequality_holds(v, &sel[..k], &rest[..k], c, energy) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget() -> PrivacyBudget {
        PrivacyBudget::new(1.0, 0.1).unwrap()
    }

    #[test]
    fn zero_noise_is_exact_top_s() {
        let r = peel(&[3.0, -5.0, 1.0], 2, budget(), 0.0, Seed(1), false).unwrap();
        assert_eq!(r.selected, vec![1, 0]);
        assert_eq!(r.output, vec![3.0, -5.0, 0.0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let r = peel(&[0.0, 0.0], 1, budget(), 0.0, Seed(1), false).unwrap();
        assert_eq!(r.selected, vec![0]);
        assert_eq!(r.output, vec![0.0, 0.0]);
    }

    #[test]
    fn full_selection_returns_v() {
        let v = [0.5, -2.0, 7.0, 0.0, 1.5];
        let r = peel(&v, 5, budget(), 0.0, Seed(3), false).unwrap();
        assert_eq!(r.output, v.to_vec());
    }

    #[test]
    fn rejects_s_above_d() {
        assert!(peel(&[1.0, 2.0], 3, budget(), 1.0, Seed(1), false).is_err());
        assert!(peel(&[1.0, 2.0], 0, budget(), 1.0, Seed(1), false).is_err());
    }

    #[test]
    fn output_support_equals_selection() {
        let v: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 4.0).collect();
        for seed in 0..50 {
            let r = peel(&v, 6, budget(), 0.5, Seed(seed), true).unwrap();
            let mut uniq = r.selected.clone();
            uniq.sort_unstable();
            uniq.dedup();
            assert_eq!(uniq.len(), 6);
            for (j, x) in r.output.iter().enumerate() {
                if !r.selected.contains(&j) {
                    assert_eq!(*x, 0.0);
                }
            }
            // s selection rounds plus one output record
            assert_eq!(r.ledger.as_ref().unwrap().len(), 7);
            let sel_draws: usize = r.ledger.as_ref().unwrap().selection_rounds(0).map(|x| x.values.len()).sum();
            assert_eq!(sel_draws, (0..6).map(|i| 40 - i).sum::<usize>());
        }
    }

    #[test]
    fn verify_needs_ledger() {
        let r = peel(&[1.0, 2.0], 1, budget(), 1.0, Seed(1), false).unwrap();
        assert!(verify_peeling_accuracy(&[1.0, 2.0], &r, 1.0).is_err());
    }

    #[test]
    fn zero_noise_accuracy_has_no_noise_term() {
        let v = [0.1, 4.0, -3.0, 2.0, -0.5];
        let r = peel(&v, 2, budget(), 0.0, Seed(5), true).unwrap();
        assert_eq!(selection_noise_energy(r.ledger.as_ref().unwrap(), 0), 0.0);
        assert!(verify_peeling_accuracy(&v, &r, 1.0).unwrap());
        // with c → 0 the inequality still holds for exact top-s
        assert!(verify_peeling_accuracy(&v, &r, 1e-9).unwrap());
    }

    #[test]
    fn equal_entries_hold() {
        let v = vec![2.5; 30];
        for seed in 0..100 {
            let r = peel(&v, 4, budget(), 1.0, Seed(seed), true).unwrap();
            assert!(verify_peeling_accuracy(&v, &r, 1.0).unwrap());
        }
    }

    #[test]
    fn detects_a_violation() {
        // A doctored result that claims the small coordinate was selected.
        let v = [10.0, 0.1];
        let mut r = peel(&v, 1, budget(), 0.0, Seed(1), true).unwrap();
        r.selected = vec![1];
        assert!(!verify_peeling_accuracy(&v, &r, 1.0).unwrap());
    }
}
