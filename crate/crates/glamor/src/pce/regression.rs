//! Least-squares machinery on explicit design columns.
//!
//! Everything is built around an incrementally grown QR factorization
//! (modified Gram-Schmidt with one reorthogonalization pass). Growing the
//! factorization one column at a time gives the hat-matrix diagonals, and so
//! the closed-form leave-one-out error, for every prefix of a column
//! ordering at quadratic rather than quartic cost; the sparse selection in
//! `lar` leans on this.

use crate::error::{Error, Result};

/// Relative threshold below which a new column counts as collinear.
const COLLINEAR_TOL: f64 = 1e-8;

pub fn sample_variance(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
}

/// QR factorization grown column by column, tracking fitted values and
/// hat diagonals for the current prefix.
pub struct IncrementalQr {
    n: usize,
    q: Vec<Vec<f64>>,
    /// r[j] holds column j of R (length j+1).
    r: Vec<Vec<f64>>,
    qty: Vec<f64>,
    yhat: Vec<f64>,
    hat: Vec<f64>,
    y: Vec<f64>,
}

impl IncrementalQr {
    pub fn new(y: &[f64]) -> Self {
        IncrementalQr {
            n: y.len(),
            q: Vec::new(),
            r: Vec::new(),
            qty: Vec::new(),
            yhat: vec![0.0; y.len()],
            hat: vec![0.0; y.len()],
            y: y.to_vec(),
        }
    }

    pub fn k(&self) -> usize {
        self.q.len()
    }

    /// Orthogonalizes `col` against the current basis and appends it.
    /// Returns false (leaving the factorization unchanged) when the column
    /// is numerically inside the current span.
    pub fn push(&mut self, col: &[f64]) -> bool {
        assert_eq!(col.len(), self.n);
        let norm0 = norm(col);
        if norm0 == 0.0 {
            return false;
        }
        let mut v = col.to_vec();
        let mut rcol = vec![0.0; self.k() + 1];
        for pass in 0..2 {
            for (j, qj) in self.q.iter().enumerate() {
                let d = dot(qj, &v);
                if pass == 0 {
                    rcol[j] = d;
                } else {
                    rcol[j] += d;
                }
                for (vi, qi) in v.iter_mut().zip(qj) {
                    *vi -= d * qi;
                }
            }
        }
        let nv = norm(&v);
        if nv <= COLLINEAR_TOL * norm0 {
            return false;
        }
        for vi in v.iter_mut() {
            *vi /= nv;
        }
        *rcol.last_mut().unwrap() = nv;
        let qy = dot(&v, &self.y);
        for i in 0..self.n {
            self.yhat[i] += qy * v[i];
            self.hat[i] += v[i] * v[i];
        }
        self.qty.push(qy);
        self.q.push(v);
        self.r.push(rcol);
        true
    }

    /// Closed-form leave-one-out mean squared error of the current prefix,
    /// divided by `normalizer` (pass Var(y) for the relative error).
    pub fn loo(&self, normalizer: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let denom = (1.0 - self.hat[i]).max(1e-12);
            let e = (self.y[i] - self.yhat[i]) / denom;
            acc += e * e;
        }
        acc / (self.n as f64 * normalizer)
    }

    /// Small-sample correction factor n/(n−k)·(1 + tr[(ΨᵀΨ)⁻¹]) applied to
    /// LOO when comparing models of different sizes. The raw estimate is
    /// optimistic for large or nearly collinear bases, so selection on it
    /// alone keeps adding terms.
    pub fn correction_factor(&self) -> f64 {
        let k = self.k();
        let n = self.n as f64;
        if self.n <= k {
            return f64::INFINITY;
        }
        // tr[(ΨᵀΨ)⁻¹] equals the squared Frobenius norm of R⁻¹.
        let mut trace = 0.0;
        let mut z = vec![0.0; k];
        for j in 0..k {
            z[j] = 1.0 / self.r[j][j];
            for i in (0..j).rev() {
                let s: f64 = ((i + 1)..=j).map(|l| self.r[l][i] * z[l]).sum();
                z[i] = -s / self.r[i][i];
            }
            trace += z.iter().take(j + 1).map(|v| v * v).sum::<f64>();
        }
        n / (n - k as f64) * (1.0 + trace)
    }

    /// Solves R c = Qᵀy for the current prefix.
    pub fn coefficients(&self) -> Vec<f64> {
        let k = self.k();
        let mut c = self.qty.clone();
        for j in (0..k).rev() {
            c[j] /= self.r[j][j];
            for i in 0..j {
                c[i] -= self.r[j][i] * c[j];
            }
        }
        c
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub struct LsFit {
    pub coefficients: Vec<f64>,
    /// Relative leave-one-out error (absolute when Var(y) vanishes).
    pub loo: f64,
    /// LOO times the small-sample correction; the value model selection
    /// should compare across bases of different sizes.
    pub loo_corrected: f64,
}

/// Ordinary least squares on explicit columns.
pub fn ols_columns(cols: &[Vec<f64>], y: &[f64]) -> Result<LsFit> {
    let n = y.len();
    if cols.is_empty() {
        return Err(Error::SingularDesign("no regressor columns".into()));
    }
    if n <= cols.len() {
        return Err(Error::SingularDesign(format!(
            "need more points ({n}) than basis functions ({})",
            cols.len()
        )));
    }
    let mut qr = IncrementalQr::new(y);
    for (j, col) in cols.iter().enumerate() {
        if !qr.push(col) {
            return Err(Error::SingularDesign(format!("column {j} is collinear with predecessors")));
        }
    }
    let loo = qr.loo(loo_normalizer(y));
    Ok(LsFit { coefficients: qr.coefficients(), loo, loo_corrected: loo * qr.correction_factor() })
}

/// Normalizer for relative LOO; falls back to absolute error for constant y.
pub fn loo_normalizer(y: &[f64]) -> f64 {
    let v = sample_variance(y);
    if v > 0.0 {
        v
    } else {
        1.0
    }
}

/// Weighted least squares coefficients; `variances` are the per-point noise
/// variances, so row i is scaled by 1/√v_i.
pub fn wls_columns(cols: &[Vec<f64>], y: &[f64], variances: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    if variances.len() != n {
        return Err(Error::Domain("weight vector length mismatch".into()));
    }
    for (i, &v) in variances.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("weight {i} must be a positive variance, got {v}")));
        }
    }
    let scale: Vec<f64> = variances.iter().map(|v| 1.0 / v.sqrt()).collect();
    let yw: Vec<f64> = y.iter().zip(&scale).map(|(yi, s)| yi * s).collect();
    let colsw: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| c.iter().zip(&scale).map(|(ci, s)| ci * s).collect())
        .collect();
    Ok(ols_columns(&colsw, &yw)?.coefficients)
}

pub fn weighted_rss(cols: &[Vec<f64>], y: &[f64], coefs: &[f64], variances: &[f64]) -> f64 {
    let n = y.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut f = 0.0;
        for (c, col) in coefs.iter().zip(cols) {
            f += c * col[i];
        }
        let e = y[i] - f;
        acc += e * e / variances[i];
    }
    acc
}
