//! Polynomial chaos expansions over an independent input model.
//!
//! Bases are tensor products of univariate orthonormal polynomials,
//! truncated by the hyperbolic q-norm rule ‖α‖_q ≤ p and ordered graded
//! lexicographically so serialized models are stable. Orthonormality makes
//! variance bookkeeping trivial: the spectral variance is the plain sum of
//! squared non-constant coefficients, which is what the Sobol' extraction
//! exploits.

mod lar;
mod poly;
pub(crate) mod regression;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::input::InputModel;
use crate::report::{IndexKind, SobolEntry, SobolReport};

pub use lar::HybridFit;

/// Slack for the q-norm membership test; (√2)^2 lands a hair above 2 in
/// floating point and must still count as inside.
const QNORM_SLACK: f64 = 1e-9;
/// Candidate matrices are capped at roughly this many f64 entries.
const CANDIDATE_BUDGET: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&d| d == 0)
    }

    /// Bitmask of the dimensions this index actually involves.
    pub fn support_mask(&self) -> u64 {
        debug_assert!(self.dim() <= 64);
        self.0.iter().enumerate().fold(0u64, |m, (j, &d)| if d > 0 { m | (1 << j) } else { m })
    }

    fn within_qnorm(&self, p: u32, q: f64) -> bool {
        if q >= 1.0 {
            return self.total_degree() <= p;
        }
        let s: f64 = self.0.iter().map(|&d| (d as f64).powf(q)).sum();
        s <= (p as f64).powf(q) + QNORM_SLACK
    }
}

/// Graded lexicographic order: by total degree, ties broken so that weight
/// on earlier dimensions comes first.
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub indices: Vec<MultiIndex>,
    /// Maximum degree of the generating truncation.
    pub p: u32,
    /// q-norm exponent of the generating truncation.
    pub q: f64,
    pub dim: usize,
}

impl BasisSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Highest degree used per dimension; sizes the univariate tables.
    fn max_degrees(&self) -> Vec<usize> {
        let mut md = vec![0usize; self.dim];
        for a in &self.indices {
            for (j, &d) in a.0.iter().enumerate() {
                md[j] = md[j].max(d as usize);
            }
        }
        md
    }

    fn subset(&self, positions: &[usize]) -> BasisSet {
        BasisSet {
            indices: positions.iter().map(|&i| self.indices[i].clone()).collect(),
            p: self.p,
            q: self.q,
            dim: self.dim,
        }
    }
}

/// All multi-indices with ‖α‖_q ≤ p over `dim` variables, graded lex order.
pub fn enumerate_basis(dim: usize, p: u32, q: f64) -> BasisSet {
    assert!(dim >= 1 && dim <= 64, "dimension {dim} out of range");
    assert!(q > 0.0 && q <= 1.0, "q-norm exponent {q} outside (0,1]");
    let mut out = Vec::new();
    let mut cur = vec![0u32; dim];
    fill(&mut out, &mut cur, 0, p, p, q);
    out.sort_unstable();
    BasisSet { indices: out, p, q, dim }
}

fn fill(out: &mut Vec<MultiIndex>, cur: &mut Vec<u32>, j: usize, left: u32, p: u32, q: f64) {
    if j == cur.len() {
        let idx = MultiIndex(cur.clone());
        if idx.within_qnorm(p, q) {
            out.push(idx);
        }
        return;
    }
    for d in 0..=left {
        cur[j] = d;
        fill(out, cur, j + 1, left - d, p, q);
    }
    cur[j] = 0;
}

/// Reusable evaluator: univariate tables are scratch space, so repeated
/// point evaluations do not allocate.
pub struct BasisEvaluator {
    indices: Vec<Vec<u32>>,
    tables: Vec<Vec<f64>>,
    im: InputModel,
}

impl BasisEvaluator {
    pub fn new(b: &BasisSet, im: &InputModel) -> Result<Self> {
        if b.dim != im.dim() {
            return Err(Error::Domain(format!(
                "basis dimension {} does not match input model dimension {}",
                b.dim,
                im.dim()
            )));
        }
        let tables = b.max_degrees().iter().map(|&d| vec![0.0; d + 1]).collect();
        Ok(BasisEvaluator {
            indices: b.indices.iter().map(|a| a.0.clone()).collect(),
            tables,
            im: im.clone(),
        })
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    /// Evaluates every basis function at x into `out`. The point is not
    /// range-checked; callers own domain validation.
    pub fn eval_into(&mut self, x: &[f64], out: &mut [f64]) {
        for (j, m) in self.im.marginals.iter().enumerate() {
            poly::eval_orthonormal(m, m.standardize(x[j]), &mut self.tables[j]);
        }
        for (a, o) in self.indices.iter().zip(out.iter_mut()) {
            let mut v = 1.0;
            for (j, &d) in a.iter().enumerate() {
                if d > 0 {
                    v *= self.tables[j][d as usize];
                }
            }
            *o = v;
        }
    }
}

/// ψ_α(x) for every α in the basis, with domain checking.
pub fn eval_basis(b: &BasisSet, im: &InputModel, x: &[f64]) -> Result<Vec<f64>> {
    im.check_point(x)?;
    let mut ev = BasisEvaluator::new(b, im)?;
    let mut out = vec![0.0; b.len()];
    ev.eval_into(x, &mut out);
    Ok(out)
}

/// Column-major design matrix of basis evaluations over the points.
pub fn basis_matrix(b: &BasisSet, im: &InputModel, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = xs.len();
    let mut ev = BasisEvaluator::new(b, im)?;
    let k = b.len();
    let mut cols = vec![vec![0.0; n]; k];
    let mut row = vec![0.0; k];
    for (i, x) in xs.iter().enumerate() {
        im.check_point(x)?;
        ev.eval_into(x, &mut row);
        for (c, &v) in cols.iter_mut().zip(&row) {
            c[i] = v;
        }
    }
    Ok(cols)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceModel {
    pub basis: BasisSet,
    pub coefficients: Vec<f64>,
    pub input_model: InputModel,
}

impl PceModel {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let psi = eval_basis(&self.basis, &self.input_model, x)?;
        Ok(psi.iter().zip(&self.coefficients).map(|(p, c)| p * c).sum())
    }

    /// Coefficient of the constant term, i.e. the model's mean.
    pub fn mean(&self) -> f64 {
        self.basis
            .indices
            .iter()
            .zip(&self.coefficients)
            .find(|(a, _)| a.is_zero())
            .map(|(_, &c)| c)
            .unwrap_or(0.0)
    }

    /// Σ c_α² over α ≠ 0; the model variance under the input distribution.
    pub fn spectral_variance(&self) -> f64 {
        self.variance_where(|_| true)
    }

    /// Σ c_α² over non-constant α whose support mask satisfies `pred`.
    pub fn variance_where(&self, pred: impl Fn(u64) -> bool) -> f64 {
        self.basis
            .indices
            .iter()
            .zip(&self.coefficients)
            .filter(|(a, _)| !a.is_zero() && pred(a.support_mask()))
            .map(|(_, &c)| c * c)
            .sum()
    }
}

/// Ordinary least-squares PCE fit; returns coefficients and relative LOO.
pub fn ols(b: &BasisSet, im: &InputModel, xs: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    if xs.len() != y.len() {
        return Err(Error::Data(format!("{} points but {} targets", xs.len(), y.len())));
    }
    let cols = basis_matrix(b, im, xs)?;
    let fit = regression::ols_columns(&cols, y)?;
    Ok((fit.coefficients, fit.loo))
}

/// Weighted least squares with per-point noise variances.
pub fn wls(
    b: &BasisSet,
    im: &InputModel,
    xs: &[Vec<f64>],
    y: &[f64],
    variances: &[f64],
) -> Result<Vec<f64>> {
    let cols = basis_matrix(b, im, xs)?;
    Ok(regression::wls_columns(&cols, y, variances)?)
}

/// Hybrid LAR over an explicit candidate basis.
pub fn hybrid_lar(
    candidates: &BasisSet,
    im: &InputModel,
    xs: &[Vec<f64>],
    y: &[f64],
    max_terms: usize,
) -> Result<(BasisSet, Vec<f64>, f64)> {
    if candidates.is_empty() || !candidates.indices[0].is_zero() {
        return Err(Error::Domain("candidate basis must start with the constant index".into()));
    }
    let cols = basis_matrix(candidates, im, xs)?;
    let fit = lar::hybrid_lar_columns(&cols, y, max_terms)?;
    Ok((candidates.subset(&fit.selected), fit.coefficients, fit.loo))
}

#[derive(Debug, Clone)]
pub struct AolsOptions {
    pub degrees: Vec<u32>,
    pub qnorms: Vec<f64>,
    pub max_terms: usize,
}

impl Default for AolsOptions {
    fn default() -> Self {
        AolsOptions { degrees: (0..=10).collect(), qnorms: vec![0.5, 0.75, 1.0], max_terms: usize::MAX }
    }
}

pub struct AolsFit {
    pub basis: BasisSet,
    pub coefficients: Vec<f64>,
    pub loo: f64,
}

impl AolsFit {
    pub fn model(&self, im: &InputModel) -> PceModel {
        PceModel {
            basis: self.basis.clone(),
            coefficients: self.coefficients.clone(),
            input_model: im.clone(),
        }
    }
}

/// Degree- and q-norm-adaptive sparse fit: hybrid LAR on every candidate
/// truncation, keeping the smallest LOO. Degrees are scanned in ascending
/// order per q and abandoned after two consecutive non-improvements.
pub fn aols(im: &InputModel, xs: &[Vec<f64>], y: &[f64], opts: &AolsOptions) -> Result<AolsFit> {
    if opts.degrees.is_empty() || opts.qnorms.is_empty() {
        return Err(Error::Config("aols needs non-empty degree and q-norm grids".into()));
    }
    let n = xs.len();
    let dim = im.dim();
    let mut degrees = opts.degrees.clone();
    degrees.sort_unstable();
    let mut best: Option<AolsFit> = None;
    let mut seen: HashSet<Vec<MultiIndex>> = HashSet::new();
    let mut last_err: Option<Error> = None;

    for &q in &opts.qnorms {
        let mut best_q = f64::INFINITY;
        let mut worsenings = 0usize;
        for &p in &degrees {
            let cand = enumerate_basis(dim, p, q);
            if cand.len().saturating_mul(n) > CANDIDATE_BUDGET {
                break;
            }
            let fresh = seen.insert(cand.indices.clone());
            let loo = if fresh {
                match hybrid_lar(&cand, im, xs, y, opts.max_terms) {
                    Ok((basis, coefficients, loo)) => {
                        if best.as_ref().is_none_or(|b| loo < b.loo) {
                            best = Some(AolsFit { basis, coefficients, loo });
                        }
                        loo
                    }
                    Err(e) => {
                        last_err = Some(e);
                        f64::INFINITY
                    }
                }
            } else {
                // Identical candidate set already fitted under another q.
                best_q
            };
            if loo < best_q {
                best_q = loo;
                worsenings = 0;
            } else {
                worsenings += 1;
                if worsenings >= 2 {
                    break;
                }
            }
        }
    }

    best.ok_or_else(|| {
        Error::Fit(format!(
            "no candidate truncation produced a fit: {}",
            last_err.map_or_else(|| "all pairs skipped".into(), |e| e.to_string())
        ))
    })
}

/// Sobol' indices read off an orthonormal PCE: per-variable first-order and
/// total indices, plus closed/total/interaction values for any extra
/// subsets. Metadata fields are left generic for the caller to overwrite.
pub fn sobol_from_pce(m: &PceModel, extra_subsets: &[Vec<usize>]) -> Result<SobolReport> {
    let dim = m.basis.dim;
    let total = m.spectral_variance();
    if total <= 0.0 {
        return Err(Error::UndefinedIndex("PCE has zero spectral variance".into()));
    }
    let mut entries = Vec::new();
    for i in 0..dim {
        let mask = 1u64 << i;
        let first = m.variance_where(|s| s & !mask == 0) / total;
        let tot = m.variance_where(|s| s & mask != 0) / total;
        entries.push(SobolEntry::new(vec![i], IndexKind::First, first));
        entries.push(SobolEntry::new(vec![i], IndexKind::Total, tot));
    }
    for sub in extra_subsets {
        let mut sub = sub.clone();
        sub.sort_unstable();
        sub.dedup();
        if sub.iter().any(|&i| i >= dim) {
            return Err(Error::Domain(format!("subset {sub:?} outside dimension {dim}")));
        }
        if sub.len() < 2 {
            continue;
        }
        let mask = sub.iter().fold(0u64, |acc, &i| acc | (1 << i));
        let closed = m.variance_where(|s| s & !mask == 0) / total;
        let tot = m.variance_where(|s| s & mask != 0) / total;
        let inter = m.variance_where(|s| s == mask) / total;
        entries.push(SobolEntry::new(sub.clone(), IndexKind::First, closed));
        entries.push(SobolEntry::new(sub.clone(), IndexKind::Total, tot));
        entries.push(SobolEntry::new(sub, IndexKind::Interaction, inter));
    }
    Ok(SobolReport {
        qoi: String::new(),
        estimator: "pce".into(),
        n_samples: 0,
        loo_error: None,
        loo_warning: false,
        entries,
        notes: Vec::new(),
    })
}
