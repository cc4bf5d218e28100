//! Univariate orthonormal polynomial families.
//!
//! Legendre polynomials are orthonormal for the uniform density on [−1,1]
//! after scaling by √(2k+1); probabilists' Hermite polynomials are
//! orthonormal for the standard gaussian after scaling by 1/√(k!). Both are
//! evaluated by their three-term recurrences.

use crate::input::Marginal;

/// Fills `out[k]` with the degree-k orthonormal polynomial at the reference
/// coordinate t, for k = 0..out.len().
pub fn eval_orthonormal(m: &Marginal, t: f64, out: &mut [f64]) {
    match m {
        Marginal::Uniform { .. } => legendre(t, out),
        Marginal::Gaussian { .. } => hermite(t, out),
    }
}

fn legendre(t: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    // Raw P_k first, then normalize; the recurrence is stable on [−1,1].
    out[0] = 1.0;
    if n > 1 {
        out[1] = t;
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * t * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
    for (k, v) in out.iter_mut().enumerate() {
        *v *= (2.0 * k as f64 + 1.0).sqrt();
    }
}

fn hermite(z: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    out[0] = 1.0;
    if n > 1 {
        out[1] = z;
    }
    for k in 1..n.saturating_sub(1) {
        out[k + 1] = z * out[k] - k as f64 * out[k - 1];
    }
    let mut fact = 1.0;
    for (k, v) in out.iter_mut().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        *v /= fact.sqrt();
    }
}
