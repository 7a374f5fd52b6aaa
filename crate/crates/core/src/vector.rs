//! Small dense-vector helpers shared by the estimators.

use crate::error::{ensure, Result};

/// Clamps `x` into `[-r, r]`.
pub fn clamp_scalar(x: f64, r: f64) -> Result<f64> {
    ensure(x.is_finite(), || format!("clamp input must be finite, got {x}"))?;
    ensure(r.is_finite() && r > 0.0, || {
        format!("clamp radius must be positive and finite, got {r}")
    })?;
    Ok(x.max(-r).min(r))
}

/// Euclidean projection onto the ℓ2 ball of radius `c`.
pub fn project_l2_ball(v: &[f64], c: f64) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    project_l2_ball_in_place(&mut out, c)?;
    Ok(out)
}

pub fn project_l2_ball_in_place(v: &mut [f64], c: f64) -> Result<()> {
    ensure(c.is_finite() && c > 0.0, || {
        format!("projection radius must be positive and finite, got {c}")
    })?;
    ensure(v.iter().all(|x| x.is_finite()), || {
        "cannot project a vector with non-finite entries".into()
    })?;
    let norm = norm2(v);
    if norm > c {
        let scale = c / norm;
        v.iter_mut().for_each(|x| *x *= scale);
        // Rounding can leave the norm a few ulps above c.
        while norm2(v) > c {
            v.iter_mut().for_each(|x| *x *= 1.0 - 4.0 * f64::EPSILON);
        }
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    let max = norm_inf(v);
    if max == 0.0 || !max.is_finite() {
        return max;
    }
    if (1e-150..1e150).contains(&max) {
        return v.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    // Scaled accumulation avoids overflow and underflow at the extremes.
    let ss: f64 = v.iter().map(|x| (x / max) * (x / max)).sum();
    max * ss.sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// ‖a − b‖₂.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&diff)
}

/// Number of non-zero entries.
pub fn support_size(v: &[f64]) -> usize {
    v.iter().filter(|x| **x != 0.0).count()
}
