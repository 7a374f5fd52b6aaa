//! Calibrated noise primitives: Laplace and Gaussian output perturbation, the
//! exponential mechanism, and the sensitivity of the truncated mean.

use serde::{Deserialize, Serialize};

use crate::budget::PrivacyBudget;
use crate::error::{ensure, Error, Result};
use crate::rng::{NoiseSource, Seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

/// Worst-case change of a statistic, in the given norm, between adjacent datasets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityBound {
    pub order: Norm,
    value: f64,
}

impl SensitivityBound {
    pub fn new(order: Norm, value: f64) -> Result<Self> {
        ensure(value.is_finite() && value >= 0.0, || {
            format!("sensitivity must be finite and non-negative, got {value}")
        })?;
        Ok(SensitivityBound { order, value })
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

/// `d` i.i.d. Laplace(scale) draws.
pub fn laplace_vector(d: usize, scale: f64, seed: Seed) -> Result<Vec<f64>> {
    ensure(scale.is_finite() && scale > 0.0, || {
        format!("laplace scale must be positive and finite, got {scale}")
    })?;
    let mut src = NoiseSource::new(seed);
    Ok((0..d).map(|_| src.laplace(scale)).collect())
}

/// Per-coordinate variance of the Gaussian mechanism, plus calibration warnings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianCalibration {
    pub variance: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Gaussian mechanism variance `2 (Δ₂/ε)² ln(1.25/δ)`.
///
/// The classical calibration is only proven for ε ≤ 1; larger ε is evaluated
/// anyway and flagged in [`GaussianCalibration::warnings`].
pub fn gaussian_sigma2(delta2: SensitivityBound, budget: PrivacyBudget) -> Result<GaussianCalibration> {
    ensure(delta2.order == Norm::L2, || "gaussian mechanism needs an L2 sensitivity".into())?;
    ensure(delta2.value > 0.0, || "gaussian mechanism needs a positive sensitivity".into())?;
    if budget.delta() == 0.0 {
        return Err(Error::unsupported("the gaussian mechanism requires delta > 0"));
    }
    let ratio = delta2.value / budget.epsilon();
    let variance = 2.0 * ratio * ratio * (1.25 / budget.delta()).ln();
    let mut warnings = Vec::new();
    if budget.epsilon() > 1.0 {
        warnings.push(format!(
            "epsilon = {} exceeds 1; the gaussian calibration is only guaranteed for epsilon <= 1",
            budget.epsilon()
        ));
    }
    Ok(GaussianCalibration { variance, warnings })
}

/// Laplace scale used in every round of the peeling selection:
/// `λ · 2√(3 s ln(1/δ)) / ε`.
pub fn peeling_scale(lambda: f64, s: usize, budget: PrivacyBudget) -> Result<f64> {
    ensure(lambda.is_finite() && lambda >= 0.0, || {
        format!("lambda must be finite and non-negative, got {lambda}")
    })?;
    ensure(s >= 1, || "sparsity must be at least 1".into())?;
    if budget.delta() == 0.0 {
        return Err(Error::unsupported("peeling requires delta > 0"));
    }
    let log_term = (1.0 / budget.delta()).ln();
    Ok(lambda * 2.0 * (3.0 * s as f64 * log_term).sqrt() / budget.epsilon())
}

/// Samples an index with probability ∝ exp(−ε·scoreᵢ / (2Δ)). Lower scores win.
///
/// `epsilon = +∞` or a zero sensitivity degenerates to the argmin (lowest
/// index among ties).
pub fn exponential_mechanism(
    scores: &[f64],
    sensitivity: SensitivityBound,
    epsilon: f64,
    seed: Seed,
) -> Result<usize> {
    let mut src = NoiseSource::new(seed);
    exponential_mechanism_with(&mut src, scores, sensitivity, epsilon)
}

pub fn exponential_mechanism_with(
    src: &mut NoiseSource,
    scores: &[f64],
    sensitivity: SensitivityBound,
    epsilon: f64,
) -> Result<usize> {
    ensure(!scores.is_empty(), || "exponential mechanism needs at least one candidate".into())?;
    ensure(scores.iter().all(|s| s.is_finite()), || "scores must be finite".into())?;
    ensure(epsilon > 0.0 && !epsilon.is_nan(), || {
        format!("epsilon must be positive, got {epsilon}")
    })?;
    let best = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    if epsilon.is_infinite() || sensitivity.value == 0.0 {
        return Ok(scores.iter().position(|s| *s == best).expect("non-empty"));
    }
    let rate = epsilon / (2.0 * sensitivity.value);
    let weights: Vec<f64> = scores.iter().map(|s| (-(s - best) * rate).exp()).collect();
    let total: f64 = weights.iter().sum();
    let target = src.open01() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return Ok(i);
        }
    }
    Ok(weights.iter().rposition(|w| *w > 0.0).expect("best candidate has weight 1"))
}

/// Sensitivity of the coordinatewise truncated mean over data clamped to an
/// interval of width `2r`: `2r√d/n` in ℓ2, `2r/n` in ℓ∞, `2rd/n` in ℓ1.
pub fn truncated_mean_sensitivity(n: usize, d: usize, r: f64, order: Norm) -> Result<SensitivityBound> {
    ensure(n >= 1 && d >= 1, || "n and d must be positive".into())?;
    ensure(r.is_finite() && r > 0.0, || format!("truncation level must be positive, got {r}"))?;
    let per_coord = 2.0 * r / n as f64;
    let value = match order {
        Norm::L1 => per_coord * d as f64,
        Norm::L2 => per_coord * (d as f64).sqrt(),
        Norm::Linf => per_coord,
    };
    SensitivityBound::new(order, value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget(eps: f64, delta: f64) -> PrivacyBudget {
        PrivacyBudget::new(eps, delta).unwrap()
    }

    fn l2(v: f64) -> SensitivityBound {
        SensitivityBound::new(Norm::L2, v).unwrap()
    }

    #[test]
    fn laplace_moments() {
        let draws = laplace_vector(1_000_000, 1.0, Seed(2024)).unwrap();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((1.98..=2.02).contains(&var), "variance {var}");
        let mut sorted = draws.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        assert!(median.abs() <= 0.01, "median {median}");
    }

    #[test]
    fn laplace_is_deterministic_and_validates() {
        assert_eq!(laplace_vector(3, 0.7, Seed(9)).unwrap(), laplace_vector(3, 0.7, Seed(9)).unwrap());
        assert!(laplace_vector(3, 0.0, Seed(9)).is_err());
        assert!(laplace_vector(3, -1.0, Seed(9)).is_err());
    }

    #[test]
    fn gaussian_variance_values() {
        // 2 ln 5
        let base = gaussian_sigma2(l2(1.0), budget(1.0, 0.25)).unwrap().variance;
        assert!((base - 3.218_875_824_868_200_7).abs() < 1e-12);
        let doubled = gaussian_sigma2(l2(2.0), budget(1.0, 0.25)).unwrap().variance;
        assert!((doubled - 4.0 * base).abs() < 1e-12);
        let eps2 = gaussian_sigma2(l2(1.0), budget(2.0, 0.25)).unwrap();
        assert!((eps2.variance - base / 4.0).abs() < 1e-12);
        assert_eq!(eps2.warnings.len(), 1);
    }

    #[test]
    fn gaussian_needs_delta() {
        let err = gaussian_sigma2(l2(1.0), budget(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn peeling_scale_values() {
        // 2·√(9 ln 10)
        let v = peeling_scale(1.0, 3, budget(1.0, 0.1)).unwrap();
        assert!((v - 9.104_562_776_310_878).abs() < 1e-9, "{v}");
        assert_eq!(peeling_scale(0.0, 3, budget(1.0, 0.1)).unwrap(), 0.0);
        let s2 = peeling_scale(1.0, 6, budget(1.0, 0.1)).unwrap();
        assert!((s2 / v - 2f64.sqrt()).abs() < 1e-12);
        assert!(peeling_scale(1.0, 0, budget(1.0, 0.1)).is_err());
        assert!(matches!(
            peeling_scale(1.0, 1, budget(1.0, 0.0)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn calibrations_are_monotone() {
        let epsilons = [0.1, 0.3, 0.5, 0.9];
        let deltas = [1e-6, 1e-4, 1e-2, 0.2];
        for w in epsilons.windows(2) {
            for &d in &deltas {
                let a = gaussian_sigma2(l2(1.0), budget(w[0], d)).unwrap().variance;
                let b = gaussian_sigma2(l2(1.0), budget(w[1], d)).unwrap().variance;
                assert!(a > b);
                assert!(peeling_scale(1.0, 4, budget(w[0], d)).unwrap() > peeling_scale(1.0, 4, budget(w[1], d)).unwrap());
            }
        }
        for w in deltas.windows(2) {
            let a = gaussian_sigma2(l2(1.0), budget(0.5, w[0])).unwrap().variance;
            let b = gaussian_sigma2(l2(1.0), budget(0.5, w[1])).unwrap().variance;
            assert!(a > b);
            assert!(peeling_scale(1.0, 4, budget(0.5, w[0])).unwrap() > peeling_scale(1.0, 4, budget(0.5, w[1])).unwrap());
        }
        for (lo, hi) in [(0.5, 1.0), (1.0, 3.0)] {
            let b = budget(0.5, 1e-3);
            assert!(gaussian_sigma2(l2(lo), b).unwrap().variance < gaussian_sigma2(l2(hi), b).unwrap().variance);
            assert!(peeling_scale(lo, 4, b).unwrap() < peeling_scale(hi, 4, b).unwrap());
        }
        for s in 1..10 {
            let b = budget(0.5, 1e-3);
            assert!(peeling_scale(1.0, s, b).unwrap() < peeling_scale(1.0, s + 1, b).unwrap());
        }
    }

    fn frequencies(scores: &[f64], eps: f64, sens: f64, trials: u64) -> Vec<f64> {
        let sens = SensitivityBound::new(Norm::Linf, sens).unwrap();
        let mut src = NoiseSource::new(Seed(77));
        let mut counts = vec![0usize; scores.len()];
        for _ in 0..trials {
            counts[exponential_mechanism_with(&mut src, scores, sens, eps).unwrap()] += 1;
        }
        counts.iter().map(|c| *c as f64 / trials as f64).collect()
    }

    #[test]
    fn exponential_mechanism_symmetric() {
        let f = frequencies(&[1.0, 1.0], 1.0, 1.0, 40_000);
        assert!((f[0] - 0.5).abs() < 0.01, "{f:?}");
    }

    #[test]
    fn exponential_mechanism_near_argmin() {
        let f = frequencies(&[0.0, 100.0], 1e6, 1.0, 10_000);
        assert!(f[0] >= 0.999);
    }

    #[test]
    fn exponential_mechanism_softmax_two() {
        let e = std::f64::consts::E;
        let f = frequencies(&[0.0, 1.0], 2.0, 1.0, 100_000);
        assert!((f[0] - e / (e + 1.0)).abs() < 0.01, "{f:?}");
    }

    #[test]
    fn exponential_mechanism_softmax_three() {
        let scores = [0.3, 1.1, 2.0];
        let (eps, sens) = (1.5, 0.5);
        let w: Vec<f64> = scores.iter().map(|s: &f64| (-eps * s / (2.0 * sens)).exp()).collect();
        let z: f64 = w.iter().sum();
        let f = frequencies(&scores, eps, sens, 100_000);
        for (fi, wi) in f.iter().zip(&w) {
            // 4 standard errors at p ≤ 1/2 and 1e5 trials is ≈ 0.0063.
            assert!((fi - wi / z).abs() < 0.0065, "{f:?}");
        }
    }

    #[test]
    fn exponential_mechanism_degenerate_modes() {
        let sens = SensitivityBound::new(Norm::Linf, 1.0).unwrap();
        assert_eq!(exponential_mechanism(&[3.0, 1.0, 1.0], sens, f64::INFINITY, Seed(1)).unwrap(), 1);
        let zero = SensitivityBound::new(Norm::Linf, 0.0).unwrap();
        assert_eq!(exponential_mechanism(&[3.0, 2.0, 5.0], zero, 1.0, Seed(1)).unwrap(), 1);
        assert!(exponential_mechanism(&[], sens, 1.0, Seed(1)).is_err());
    }

    #[test]
    fn mean_sensitivity_values() {
        let s = truncated_mean_sensitivity(100, 4, 1.0, Norm::L2).unwrap();
        assert!((s.value() - 0.04).abs() < 1e-15);
        let inf = truncated_mean_sensitivity(100, 4, 1.0, Norm::Linf).unwrap();
        assert!((inf.value() - 0.02).abs() < 1e-15);
        let half = truncated_mean_sensitivity(200, 4, 1.0, Norm::L2).unwrap();
        assert!((half.value() - 0.02).abs() < 1e-15);
        assert!(truncated_mean_sensitivity(0, 4, 1.0, Norm::L2).is_err());
    }
}
