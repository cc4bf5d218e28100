//! Sparse regressor selection: least angle regression for ranking, prefix
//! least squares for the final pick.
//!
//! LAR is used only to order the candidate columns by relevance. The model
//! actually returned is the ordinary least-squares fit on the prefix of that
//! ranking whose leave-one-out error is smallest, with the constant column
//! always retained. This is the usual hybrid scheme: LAR's shrunken
//! coefficients are discarded, its ordering kept.

use crate::error::{Error, Result};

use super::regression::{loo_normalizer, ols_columns, IncrementalQr};

/// Stop scanning prefixes after this many consecutive non-improvements.
const DEFAULT_PATIENCE: usize = 50;

pub struct HybridFit {
    /// Indices into the candidate column list, ascending, always holding 0.
    pub selected: Vec<usize>,
    pub coefficients: Vec<f64>,
    /// Corrected relative LOO of the selected model.
    pub loo: f64,
}

/// Ranks the non-constant candidate columns by LAR activation order.
/// Columns are centered and scaled internally; collinear or constant
/// candidates are silently excluded from the ranking.
fn lar_ranking(cols: &[Vec<f64>], y: &[f64], max_active: usize) -> Vec<usize> {
    let n = y.len();
    let ymean = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - ymean).collect();

    // Standardize; remember which original column each regressor came from.
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut back: Vec<usize> = Vec::new();
    for (j, col) in cols.iter().enumerate().skip(1) {
        let mean = col.iter().sum::<f64>() / n as f64;
        let mut c: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let nrm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm <= 1e-12 {
            continue;
        }
        for v in c.iter_mut() {
            *v /= nrm;
        }
        xs.push(c);
        back.push(j);
    }
    let k = xs.len();
    if k == 0 {
        return Vec::new();
    }

    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut corr: Vec<f64> = xs.iter().map(|c| dot(c, &yc)).collect();
    let mut in_active = vec![false; k];
    let mut excluded = vec![false; k];
    let mut active: Vec<usize> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    // Cholesky factor of the signed active Gram matrix, row-packed.
    let mut chol: Vec<Vec<f64>> = Vec::new();
    let corr_tol = 1e-10 * dot(&yc, &yc).sqrt().max(1.0);

    while active.len() < max_active.min(k).min(n.saturating_sub(2)) {
        let mut best = None;
        let mut cmax = corr_tol;
        for j in 0..k {
            if !in_active[j] && !excluded[j] && corr[j].abs() > cmax {
                cmax = corr[j].abs();
                best = Some(j);
            }
        }
        let Some(jn) = best else { break };
        let sn = corr[jn].signum();

        // Rank-1 Cholesky extension; a vanishing pivot means the column is
        // inside the active span.
        let m = active.len();
        let mut row = vec![0.0; m + 1];
        for (i, &ja) in active.iter().enumerate() {
            let mut g = signs[i] * sn * dot(&xs[ja], &xs[jn]);
            for t in 0..i {
                g -= chol[i][t] * row[t];
            }
            row[i] = g / chol[i][i];
        }
        let d2 = 1.0 - row[..m].iter().map(|v| v * v).sum::<f64>();
        if d2 <= 1e-10 {
            excluded[jn] = true;
            continue;
        }
        row[m] = d2.sqrt();
        chol.push(row);
        active.push(jn);
        signs.push(sn);
        in_active[jn] = true;

        // Equiangular direction: solve G_A α = 1 through the Cholesky pair.
        let m = active.len();
        let mut alpha = vec![1.0; m];
        for i in 0..m {
            for t in 0..i {
                alpha[i] -= chol[i][t] * alpha[t];
            }
            alpha[i] /= chol[i][i];
        }
        for i in (0..m).rev() {
            for t in (i + 1)..m {
                alpha[i] -= chol[t][i] * alpha[t];
            }
            alpha[i] /= chol[i][i];
        }
        let aa = 1.0 / alpha.iter().sum::<f64>().max(1e-300).sqrt();
        let w: Vec<f64> = alpha.iter().map(|v| v * aa).collect();
        let mut u = vec![0.0; n];
        for (i, &ja) in active.iter().enumerate() {
            let s = signs[i] * w[i];
            for (ui, xi) in u.iter_mut().zip(&xs[ja]) {
                *ui += s * xi;
            }
        }

        // All active correlations share one magnitude; take the max to
        // absorb roundoff drift.
        let cmax = active.iter().map(|&ja| corr[ja].abs()).fold(0.0, f64::max);
        let mut gamma = cmax / aa;
        let mut proj = vec![0.0; k];
        for j in 0..k {
            if in_active[j] || excluded[j] {
                continue;
            }
            let a = dot(&xs[j], &u);
            proj[j] = a;
            for cand in [(cmax - corr[j]) / (aa - a), (cmax + corr[j]) / (aa + a)] {
                if cand > 1e-12 && cand < gamma {
                    gamma = cand;
                }
            }
        }

        for j in 0..k {
            if excluded[j] {
                continue;
            }
            if in_active[j] {
                corr[j] -= gamma * aa * corr[j].signum();
            } else {
                corr[j] -= gamma * proj[j];
            }
        }
    }

    active.into_iter().map(|j| back[j]).collect()
}

/// Hybrid LAR: rank with LAR, pick the prefix with minimal LOO.
///
/// `cols[0]` must be the constant column; it is kept in every model.
/// `max_terms` caps the number of non-constant regressors considered.
pub fn hybrid_lar_columns(cols: &[Vec<f64>], y: &[f64], max_terms: usize) -> Result<HybridFit> {
    let n = y.len();
    if cols.is_empty() || n < 3 {
        return Err(Error::SingularDesign("need at least 3 points and the constant column".into()));
    }
    let cap = max_terms.min(n / 2);
    let ranking = lar_ranking(cols, y, cap);
    let normalizer = loo_normalizer(y);

    let mut qr = IncrementalQr::new(y);
    if !qr.push(&cols[0]) {
        return Err(Error::SingularDesign("constant column is degenerate".into()));
    }
    // Prefix 0: intercept-only model. Prefixes compete on the corrected
    // LOO, otherwise every added term looks like an improvement.
    let mut best_loo = qr.loo(normalizer) * qr.correction_factor();
    let mut best_prefix: Vec<usize> = vec![0];
    let mut current: Vec<usize> = vec![0];
    let mut since_best = 0usize;

    for &j in &ranking {
        if !qr.push(&cols[j]) {
            continue;
        }
        current.push(j);
        let loo = qr.loo(normalizer) * qr.correction_factor();
        if loo < best_loo {
            best_loo = loo;
            best_prefix = current.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= DEFAULT_PATIENCE {
                break;
            }
        }
    }

    // Refit on the selected subset in ascending column order so the
    // returned coefficients follow the basis ordering.
    best_prefix.sort_unstable();
    let sel_cols: Vec<Vec<f64>> = best_prefix.iter().map(|&j| cols[j].clone()).collect();
    let fit = ols_columns(&sel_cols, y)?;
    Ok(HybridFit { selected: best_prefix, coefficients: fit.coefficients, loo: fit.loo_corrected })
}
