//! Generalized lambda models: a GLD whose four parameters are polynomial
//! chaos expansions over the input space.
//!
//! Fitting proceeds in two stages. Modified feasible generalized least
//! squares alternates a weighted mean fit with a variance fit on the log
//! squared residuals, which picks the truncated bases for λ1 and λ2 without
//! needing replications. Maximum likelihood then re-estimates all four
//! coefficient vectors jointly with a derivative-free simplex search, the
//! only stage that looks at the full distributional shape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::gld::{GldParams, DEFAULT_TOL};
use crate::input::{normal_quantile, InputModel};
use crate::optim::{nelder_mead, NmOptions};
use crate::pce::regression::{sample_variance, weighted_rss, wls_columns};
use crate::pce::{aols, basis_matrix, enumerate_basis, AolsOptions, BasisEvaluator, BasisSet, PceModel};
use crate::rng::{self, Stream};

/// Exponent clamp for the log link; keeps λ2 = exp(·) inside f64 range.
const EXP_CLAMP: f64 = 100.0;
/// Admissible interval for the constant terms of the shape surfaces during
/// optimization; the lower end keeps GLD variances defined.
const SHAPE_BOX: (f64, f64) = (-0.499, 5.0);
/// Near-normal GLD shape value, the standard initialization for λ3, λ4.
const SHAPE_INIT: f64 = 0.1349;
/// Mean of log χ²₁; the bias of log squared residuals as a log-variance
/// estimate, removed when converting the FGLS surface into a λ2 start.
const LOG_CHI2_MEAN: f64 = -1.270_362_845_461_478;
/// Auxiliary input sample backing the shape box penalty away from the
/// training design, and the child-seed tag deriving its stream.
const SHAPE_AUX_POINTS: usize = 256;
const SHAPE_AUX_TAG: u64 = 0x7368_6170;

fn exp_link(t: f64) -> f64 {
    t.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
}

/// Quadratic-plus-linear charge for a shape value outside the admissible
/// box; zero inside. Mild per point: the likelihood gains from pushing a
/// tail exponent past the moment boundary are a handful of units, so a
/// charge of that order per offending point deters the excursion without
/// carving a cliff into the search space.
fn box_distance_penalty(v: f64) -> f64 {
    let viol = (SHAPE_BOX.0 - v).max(0.0) + (v - SHAPE_BOX.1).max(0.0);
    1e4 * viol * viol + 1e2 * viol
}

/// Vertices of the effective input domain, where gaussian marginals count
/// as ±3σ. A degree-one surface attains its extrema over the box here, so
/// charging the corners bounds linear shapes everywhere; for higher degrees
/// the corners still pin the dominant linear trend. Skipped past 8
/// dimensions where enumeration stops being cheap.
fn effective_corners(im: &InputModel) -> Vec<Vec<f64>> {
    let m = im.dim();
    if m > 8 {
        return Vec::new();
    }
    let bounds: Vec<(f64, f64)> = im
        .marginals
        .iter()
        .map(|mg| match *mg {
            crate::input::Marginal::Uniform { a, b } => (a, b),
            crate::input::Marginal::Gaussian { mean, std } => (mean - 3.0 * std, mean + 3.0 * std),
        })
        .collect();
    (0..1usize << m)
        .map(|mask| (0..m).map(|j| if mask >> j & 1 == 1 { bounds[j].1 } else { bounds[j].0 }).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Log,
}

/// One λ_l(x) surface: a PCE plus the link applied to its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSurface {
    pub link: Link,
    pub basis: BasisSet,
    pub coefficients: Vec<f64>,
}

impl LambdaSurface {
    pub fn as_pce(&self, im: &InputModel) -> PceModel {
        PceModel {
            basis: self.basis.clone(),
            coefficients: self.coefficients.clone(),
            input_model: im.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlamModel {
    pub input_model: InputModel,
    /// Surfaces for λ1..λ4 in order; λ2 carries the log link.
    pub lambda: [LambdaSurface; 4],
}

impl GlamModel {
    pub fn validate(&self) -> Result<()> {
        for (l, s) in self.lambda.iter().enumerate() {
            if s.basis.dim != self.input_model.dim() {
                return Err(Error::Config(format!(
                    "lambda{} basis dimension {} does not match input dimension {}",
                    l + 1,
                    s.basis.dim,
                    self.input_model.dim()
                )));
            }
            if s.basis.len() != s.coefficients.len() {
                return Err(Error::Config(format!(
                    "lambda{} has {} basis terms but {} coefficients",
                    l + 1,
                    s.basis.len(),
                    s.coefficients.len()
                )));
            }
        }
        if self.lambda[1].link != Link::Log {
            return Err(Error::Config("lambda2 surface must use the log link".into()));
        }
        Ok(())
    }

    /// GLD parameters at one input point, with domain checking.
    pub fn predict_lambda(&self, x: &[f64]) -> Result<GldParams> {
        self.input_model.check_point(x)?;
        let mut pred = Predictor::new(self)?;
        Ok(pred.lambda_at(x))
    }

    /// Conditional quantile of the emulated response at x.
    pub fn emulator_quantile(&self, u: f64, x: &[f64]) -> Result<f64> {
        self.predict_lambda(x)?.quantile(u)
    }
}

/// Reusable evaluator over all four surfaces; repeated predictions do not
/// allocate. Not thread-shareable: clone one per worker.
pub struct Predictor {
    evs: Vec<BasisEvaluator>,
    coefs: [Vec<f64>; 4],
    links: [Link; 4],
    buf: Vec<f64>,
}

impl Predictor {
    pub fn new(model: &GlamModel) -> Result<Self> {
        let mut evs = Vec::with_capacity(4);
        let mut maxk = 0;
        for s in &model.lambda {
            let ev = BasisEvaluator::new(&s.basis, &model.input_model)?;
            maxk = maxk.max(ev.k());
            evs.push(ev);
        }
        Ok(Predictor {
            evs,
            coefs: [
                model.lambda[0].coefficients.clone(),
                model.lambda[1].coefficients.clone(),
                model.lambda[2].coefficients.clone(),
                model.lambda[3].coefficients.clone(),
            ],
            links: [
                model.lambda[0].link,
                model.lambda[1].link,
                model.lambda[2].link,
                model.lambda[3].link,
            ],
            buf: vec![0.0; maxk],
        })
    }

    /// GLD parameters at x; the point is assumed inside the input domain.
    pub fn lambda_at(&mut self, x: &[f64]) -> GldParams {
        let mut vals = [0.0; 4];
        for l in 0..4 {
            let k = self.coefs[l].len();
            self.evs[l].eval_into(x, &mut self.buf[..k]);
            let raw: f64 = self.buf[..k].iter().zip(&self.coefs[l]).map(|(p, c)| p * c).sum();
            vals[l] = match self.links[l] {
                Link::Identity => raw,
                Link::Log => exp_link(raw),
            };
        }
        GldParams { lambda1: vals[0], lambda2: vals[1], lambda3: vals[2], lambda4: vals[3] }
    }

    /// Response quantile at (u, x); u must lie in (0,1).
    pub fn quantile(&mut self, u: f64, x: &[f64]) -> f64 {
        self.lambda_at(x).quantile_unchecked(u)
    }

    /// One emulator draw at x.
    pub fn sample(&mut self, x: &[f64], rng: &mut impl Rng) -> f64 {
        self.quantile(rng::uniform_open01(rng), x)
    }
}

/// Σ_i −log f_GLD(y_i; λ(x_i)). Out-of-support observations contribute a
/// sentinel sloped by 10³/std(y) per unit of distance, so the result is
/// always finite.
pub fn negative_log_likelihood(model: &GlamModel, s: &SampleSet) -> Result<f64> {
    model.validate()?;
    let mut pred = Predictor::new(model)?;
    let kappa = out_of_support_slope(&s.y);
    let mut acc = 0.0;
    for (x, &y) in s.xs.iter().zip(&s.y) {
        model.input_model.check_point(x)?;
        acc -= pred.lambda_at(x).penalized_log_pdf(y, DEFAULT_TOL, kappa);
    }
    Ok(acc)
}

fn out_of_support_slope(y: &[f64]) -> f64 {
    let sd = sample_variance(y).sqrt();
    if sd > 0.0 {
        1e3 / sd
    } else {
        1e3
    }
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub degrees_mean: Vec<u32>,
    pub qnorms_mean: Vec<f64>,
    pub degrees_var: Vec<u32>,
    pub qnorms_var: Vec<f64>,
    /// FGLS iteration count.
    pub n_fgls: usize,
    /// Truncation degree for the λ3/λ4 bases (q = 1).
    pub shape_degree: u32,
    /// Total simplex starts, the first from the FGLS point.
    pub starts: usize,
    /// Evaluation budget per start, as a multiple of the parameter count.
    /// Deliberately modest: once the surfaces are in place the likelihood
    /// keeps paying tiny amounts for tail weight the data cannot resolve,
    /// so exhausting the simplex is worse than stopping.
    pub max_evals_per_dim: usize,
    /// Floor for the evaluation budget per start.
    pub min_evals: usize,
    /// Required ratio of points to total coefficients.
    pub min_points_factor: usize,
    /// Bisection tolerance used inside the likelihood.
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            degrees_mean: (0..=10).collect(),
            qnorms_mean: vec![0.5, 0.75, 1.0],
            degrees_var: (0..=10).collect(),
            qnorms_var: vec![0.5, 0.75, 1.0],
            n_fgls: 5,
            shape_degree: 1,
            starts: 3,
            max_evals_per_dim: 150,
            min_evals: 1500,
            min_points_factor: 3,
            tol: DEFAULT_TOL,
        }
    }
}

impl FitConfig {
    /// Cap on selected terms per AOLS call so that the final coefficient
    /// count stays comfortably under n / min_points_factor.
    fn aols_cap(&self, n: usize) -> usize {
        (n / (2 * self.min_points_factor + 2)).max(1)
    }
}

/// FGLS stage output: selected bases plus the coefficients at the best
/// iteration, which seed the likelihood optimization.
#[derive(Debug, Clone)]
pub struct FglsSelection {
    pub mean_basis: BasisSet,
    pub mean_coefficients: Vec<f64>,
    pub mean_loo: f64,
    pub var_basis: BasisSet,
    pub var_coefficients: Vec<f64>,
    /// Variance-fit LOO per FGLS iteration; the minimum picks the output.
    pub loo_per_iteration: Vec<f64>,
    pub selected_iteration: usize,
    pub jittered_residuals: usize,
    /// (before, after) weighted RSS of each WLS refit.
    pub wls_rss: Vec<[f64; 2]>,
}

/// Modified FGLS: one adaptive fit for the mean, then alternating variance
/// fits on r̃ = 2·log|y − m̂| and weighted mean refits. The variance basis
/// returned is the one whose fit had the smallest LOO across iterations.
pub fn fgls_select(s: &SampleSet, im: &InputModel, cfg: &FitConfig) -> Result<FglsSelection> {
    let n = s.n();
    let cap = cfg.aols_cap(n);
    let mean_opts =
        AolsOptions { degrees: cfg.degrees_mean.clone(), qnorms: cfg.qnorms_mean.clone(), max_terms: cap };
    let var_opts =
        AolsOptions { degrees: cfg.degrees_var.clone(), qnorms: cfg.qnorms_var.clone(), max_terms: cap };

    let mean_fit = aols(im, &s.xs, &s.y, &mean_opts)?;
    let mean_basis = mean_fit.basis;
    let psi_m = basis_matrix(&mean_basis, im, &s.xs)?;
    let mut c_m = mean_fit.coefficients;

    let sd_y = sample_variance(&s.y).sqrt();
    let jitter = 1e-12 * if sd_y > 0.0 { sd_y } else { 1.0 };

    let mut best: Option<(f64, BasisSet, Vec<f64>, Vec<f64>, usize)> = None;
    let mut loos = Vec::with_capacity(cfg.n_fgls);
    let mut wls_rss = Vec::with_capacity(cfg.n_fgls);
    let mut jittered = 0usize;

    for iter in 0..cfg.n_fgls.max(1) {
        let mut rtilde = vec![0.0; n];
        for i in 0..n {
            let mut m = 0.0;
            for (c, col) in c_m.iter().zip(&psi_m) {
                m += c * col[i];
            }
            let mut r = s.y[i] - m;
            if r == 0.0 {
                r = jitter;
                jittered += 1;
            }
            rtilde[i] = 2.0 * r.abs().ln();
        }

        let var_fit = aols(im, &s.xs, &rtilde, &var_opts)?;
        let psi_v = basis_matrix(&var_fit.basis, im, &s.xs)?;
        let mut vhat = vec![0.0; n];
        let mut vmax = 0.0_f64;
        for i in 0..n {
            let mut t = 0.0;
            for (c, col) in var_fit.coefficients.iter().zip(&psi_v) {
                t += c * col[i];
            }
            vhat[i] = exp_link(t);
            vmax = vmax.max(vhat[i]);
        }
        // Floor the weights so a sharply dipping variance surface cannot
        // wreck the WLS conditioning.
        let floor = 1e-12 * vmax.max(f64::MIN_POSITIVE);
        for v in vhat.iter_mut() {
            *v = v.max(floor);
        }

        let rss_before = weighted_rss(&psi_m, &s.y, &c_m, &vhat);
        c_m = wls_columns(&psi_m, &s.y, &vhat)?;
        let rss_after = weighted_rss(&psi_m, &s.y, &c_m, &vhat);
        wls_rss.push([rss_before, rss_after]);

        loos.push(var_fit.loo);
        if best.as_ref().is_none_or(|b| var_fit.loo < b.0) {
            best = Some((var_fit.loo, var_fit.basis, var_fit.coefficients, c_m.clone(), iter));
        }
    }

    let (_, var_basis, var_coefficients, mean_coefficients, selected_iteration) =
        best.expect("at least one FGLS iteration runs");
    Ok(FglsSelection {
        mean_basis,
        mean_coefficients,
        mean_loo: mean_fit.loo,
        var_basis,
        var_coefficients,
        loo_per_iteration: loos,
        selected_iteration,
        jittered_residuals: jittered,
        wls_rss,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    /// Term counts of the selected bases for λ1..λ4.
    pub basis_sizes: [usize; 4],
    pub mean_loo: f64,
    pub fgls_loo_per_iteration: Vec<f64>,
    pub fgls_selected_iteration: usize,
    pub jittered_residuals: usize,
    pub nll_initial: f64,
    pub nll_final: f64,
    pub optimizer_evals: usize,
    pub optimizer_starts: usize,
    pub converged: bool,
    pub notes: Vec<String>,
}

/// Likelihood over flat coefficient vectors with precomputed basis rows.
struct NllWorkspace {
    /// Row-major ψ values per surface: psi[l][i*k + j].
    psi: [Vec<f64>; 4],
    k: [usize; 4],
    y: Vec<f64>,
    /// Shape-basis rows at auxiliary input points that carry the box
    /// penalty but no likelihood term.
    psi_aux: Vec<f64>,
    n_aux: usize,
    kappa: f64,
    tol: f64,
}

impl NllWorkspace {
    fn offsets(&self) -> [usize; 5] {
        let mut off = [0; 5];
        for l in 0..4 {
            off[l + 1] = off[l] + self.k[l];
        }
        off
    }

    fn nll(&self, theta: &[f64]) -> f64 {
        self.nll_terms(theta).0
    }

    /// NLL plus the summed distance of the shape surfaces outside the
    /// admissible box. The density itself is defined for any shape; the box
    /// keeps the fitted surfaces inside the moment-existence region over the
    /// whole input distribution, not only at the constant term. Violations
    /// are charged at the training points and again at an auxiliary input
    /// sample, so the penalty sees excursions the design happens to miss.
    fn nll_terms(&self, theta: &[f64]) -> (f64, f64) {
        let off = self.offsets();
        let n = self.y.len();
        let mut acc = 0.0;
        let mut box_pen = 0.0;
        for i in 0..n {
            let mut lam = [0.0_f64; 4];
            for l in 0..4 {
                let k = self.k[l];
                let row = &self.psi[l][i * k..(i + 1) * k];
                let c = &theta[off[l]..off[l + 1]];
                lam[l] = row.iter().zip(c).map(|(p, c)| p * c).sum();
            }
            if lam.iter().any(|v| !v.is_finite()) {
                return (f64::INFINITY, f64::INFINITY);
            }
            for v in [lam[2], lam[3]] {
                box_pen += box_distance_penalty(v);
            }
            let p = GldParams {
                lambda1: lam[0],
                lambda2: exp_link(lam[1]),
                lambda3: lam[2],
                lambda4: lam[3],
            };
            acc -= p.penalized_log_pdf(self.y[i], self.tol, self.kappa);
        }
        let ks = self.k[2];
        for i in 0..self.n_aux {
            let row = &self.psi_aux[i * ks..(i + 1) * ks];
            for l in [2usize, 3] {
                let c = &theta[off[l]..off[l + 1]];
                let v: f64 = row.iter().zip(c).map(|(p, c)| p * c).sum();
                if !v.is_finite() {
                    return (f64::INFINITY, f64::INFINITY);
                }
                box_pen += box_distance_penalty(v);
            }
        }
        (acc, box_pen)
    }

    /// Clamps the shape-surface constant terms into the admissible box;
    /// returns the violation distance for the penalty term.
    fn project(&self, theta: &[f64]) -> (Vec<f64>, f64) {
        let off = self.offsets();
        let mut t = theta.to_vec();
        let mut viol = 0.0;
        for pos in [off[2], off[3]] {
            let v = t[pos];
            let c = v.clamp(SHAPE_BOX.0, SHAPE_BOX.1);
            viol += (v - c).abs();
            t[pos] = c;
        }
        (t, viol)
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let (t, viol) = self.project(theta);
        let (base, box_pen) = self.nll_terms(&t);
        if viol > 0.0 {
            base + box_pen + 1e4 * viol * viol + 1e2 * viol
        } else {
            base + box_pen
        }
    }
}

fn flat_matrix(b: &BasisSet, im: &InputModel, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let cols = basis_matrix(b, im, xs)?;
    let n = xs.len();
    let k = cols.len();
    let mut flat = vec![0.0; n * k];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            flat[i * k + j] = col[i];
        }
    }
    Ok(flat)
}

/// Fits a GLaM by FGLS basis selection followed by maximum likelihood.
pub fn fit(s: &SampleSet, im: &InputModel, cfg: &FitConfig, seed: u64) -> Result<(GlamModel, FitReport)> {
    if s.dim() != im.dim() {
        return Err(Error::Data(format!(
            "sample set dimension {} does not match input model dimension {}",
            s.dim(),
            im.dim()
        )));
    }
    let n = s.n();
    let mut notes = vec![format!(
        "shape constants constrained to ({}, {}] during optimization",
        SHAPE_BOX.0, SHAPE_BOX.1
    )];

    let sel = fgls_select(s, im, cfg)?;
    let mean_basis = sel.mean_basis.clone();
    let var_basis = sel.var_basis.clone();
    let mut shape_basis = enumerate_basis(im.dim(), cfg.shape_degree, 1.0);
    let mut total = mean_basis.len() + var_basis.len() + 2 * shape_basis.len();
    if cfg.min_points_factor * total > n && cfg.shape_degree > 0 {
        shape_basis = enumerate_basis(im.dim(), 0, 1.0);
        total = mean_basis.len() + var_basis.len() + 2;
        notes.push("shape bases reduced to constants to respect the point budget".into());
    }
    if cfg.min_points_factor * total > n {
        return Err(Error::Fit(format!(
            "{n} points cannot support {total} coefficients at factor {}",
            cfg.min_points_factor
        )));
    }

    let mut aux_rng = rng::substream(rng::child_seed(seed, SHAPE_AUX_TAG), Stream::Design);
    let mut aux_xs = effective_corners(im);
    aux_xs.extend(im.sample(&mut aux_rng, SHAPE_AUX_POINTS));
    let ws = NllWorkspace {
        psi: [
            flat_matrix(&mean_basis, im, &s.xs)?,
            flat_matrix(&var_basis, im, &s.xs)?,
            flat_matrix(&shape_basis, im, &s.xs)?,
            flat_matrix(&shape_basis, im, &s.xs)?,
        ],
        k: [mean_basis.len(), var_basis.len(), shape_basis.len(), shape_basis.len()],
        y: s.y.clone(),
        psi_aux: flat_matrix(&shape_basis, im, &aux_xs)?,
        n_aux: aux_xs.len(),
        kappa: out_of_support_slope(&s.y),
        tol: cfg.tol,
    };
    let off = ws.offsets();
    let d = off[4];

    // Initialization: FGLS mean, near-normal shapes, and a λ2 surface that
    // reproduces the (bias-corrected) FGLS variance surface.
    let v0 = GldParams::new(0.0, 1.0, SHAPE_INIT, SHAPE_INIT)?.variance()?;
    let mut theta0 = vec![0.0; d];
    theta0[off[0]..off[1]].copy_from_slice(&sel.mean_coefficients);
    for (j, &cv) in sel.var_coefficients.iter().enumerate() {
        theta0[off[1] + j] = if j == 0 {
            0.5 * v0.ln() - 0.5 * (cv + LOG_CHI2_MEAN)
        } else {
            -0.5 * cv
        };
    }
    theta0[off[2]] = SHAPE_INIT;
    theta0[off[3]] = SHAPE_INIT;

    let nll_initial = ws.nll(&theta0);
    if !nll_initial.is_finite() {
        return Err(Error::Fit("initialization produced a non-finite likelihood".into()));
    }

    let nm = NmOptions {
        max_evals: cfg.min_evals.max(cfg.max_evals_per_dim * d),
        ..Default::default()
    };
    // The first simplex gets two vertices with zero shape constants, the
    // log-limit of the family where the support becomes unbounded. The
    // near-normal start has finite support, so heavy-tailed samples begin
    // outside it and the default tiny steps would need dozens of
    // expansions to uncover the tail directions.
    let mut steps: Vec<f64> = theta0
        .iter()
        .map(|v| if v.abs() > 1e-8 { nm.step_rel * v.abs() } else { nm.step_abs })
        .collect();
    steps[off[2]] = -SHAPE_INIT;
    steps[off[3]] = -SHAPE_INIT;
    let nm_first = NmOptions { steps: Some(steps), ..nm.clone() };
    let mut best: Option<crate::optim::OptimResult> = None;
    let mut evals = 0usize;
    let mut any_converged = false;
    for start in 0..cfg.starts.max(1) {
        // Restarts perturb the incumbent, re-inflating the simplex around
        // the best point found so far rather than re-climbing from theta0.
        let mut x0 = match &best {
            Some(b) if start > 0 => b.x.clone(),
            _ => theta0.clone(),
        };
        if start > 0 {
            let mut srng = rng::substream(seed, Stream::Restart(start as u64));
            for v in x0.iter_mut() {
                let g = normal_quantile(rng::uniform_open01(&mut srng));
                *v += (0.05 * v.abs() + 0.02) * g;
            }
            let (proj, _) = ws.project(&x0);
            x0 = proj;
        }
        let mut obj = |t: &[f64]| ws.objective(t);
        let r = nelder_mead(&mut obj, &x0, if start == 0 { &nm_first } else { &nm });
        evals += r.evals;
        any_converged |= r.converged;
        if best.as_ref().is_none_or(|b| r.f < b.f) {
            best = Some(r);
        }
    }
    let best = best.expect("at least one start runs");
    let (theta, _) = ws.project(&best.x);
    let nll_final = ws.nll(&theta);
    if !nll_final.is_finite() {
        return Err(Error::Fit("optimization failed to reach a finite likelihood".into()));
    }

    let model = GlamModel {
        input_model: im.clone(),
        lambda: [
            LambdaSurface {
                link: Link::Identity,
                basis: mean_basis.clone(),
                coefficients: theta[off[0]..off[1]].to_vec(),
            },
            LambdaSurface {
                link: Link::Log,
                basis: var_basis.clone(),
                coefficients: theta[off[1]..off[2]].to_vec(),
            },
            LambdaSurface {
                link: Link::Identity,
                basis: shape_basis.clone(),
                coefficients: theta[off[2]..off[3]].to_vec(),
            },
            LambdaSurface {
                link: Link::Identity,
                basis: shape_basis,
                coefficients: theta[off[3]..off[4]].to_vec(),
            },
        ],
    };

    let report = FitReport {
        basis_sizes: [model.lambda[0].basis.len(), model.lambda[1].basis.len(), model.lambda[2].basis.len(), model.lambda[3].basis.len()],
        mean_loo: sel.mean_loo,
        fgls_loo_per_iteration: sel.loo_per_iteration,
        fgls_selected_iteration: sel.selected_iteration,
        jittered_residuals: sel.jittered_residuals,
        nll_initial,
        nll_final,
        optimizer_evals: evals,
        optimizer_starts: cfg.starts.max(1),
        converged: any_converged,
        notes,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::input::Marginal;
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;

    fn line_input() -> InputModel {
        InputModel::new(vec![Marginal::Uniform { a: 0.0, b: 1.0 }]).unwrap()
    }

    /// λ1 = 1 + x, λ2 = 2, λ3 = λ4 = 0.2; constant shapes, linear location.
    fn known_model() -> GlamModel {
        let im = line_input();
        let lin = enumerate_basis(1, 1, 1.0);
        let cst = enumerate_basis(1, 0, 1.0);
        // ψ1(x) = √3 (2x−1); λ1 = 1.5 + 0.5/√3·√3(2x−1) = 1 + x.
        GlamModel {
            input_model: im,
            lambda: [
                LambdaSurface {
                    link: Link::Identity,
                    basis: lin,
                    coefficients: vec![1.5, 0.5 / 3f64.sqrt()],
                },
                LambdaSurface { link: Link::Log, basis: cst.clone(), coefficients: vec![2f64.ln()] },
                LambdaSurface { link: Link::Identity, basis: cst.clone(), coefficients: vec![0.2] },
                LambdaSurface { link: Link::Identity, basis: cst, coefficients: vec![0.2] },
            ],
        }
    }

    #[test]
    fn prediction_applies_links() {
        let g = known_model();
        let p = g.predict_lambda(&[0.25]).unwrap();
        assert_abs_diff_eq!(p.lambda1, 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(p.lambda2, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.lambda3, 0.2, epsilon = 1e-12);
        // Zero coefficients under the log link mean λ2 = 1.
        let mut g2 = g.clone();
        g2.lambda[1].coefficients = vec![0.0];
        assert_abs_diff_eq!(g2.predict_lambda(&[0.5]).unwrap().lambda2, 1.0, epsilon = 1e-15);
        assert!(g.predict_lambda(&[2.0]).is_err());
    }

    #[test]
    fn emulator_median_is_lambda1_for_symmetric_shapes() {
        let g = known_model();
        for x in [0.1, 0.5, 0.9] {
            let q = g.emulator_quantile(0.5, &[x]).unwrap();
            assert_abs_diff_eq!(q, 1.0 + x, epsilon = 1e-12);
        }
        // Monotone in u at fixed x.
        let mut prev = f64::NEG_INFINITY;
        for i in 1..20 {
            let q = g.emulator_quantile(i as f64 / 20.0, &[0.3]).unwrap();
            assert!(q >= prev);
            prev = q;
        }
    }

    #[test]
    fn nll_matches_componentwise_log_densities() {
        let g = known_model();
        let mut rng = substream(31, Stream::Design);
        let xs = g.input_model.sample(&mut rng, 10);
        let mut pred = Predictor::new(&g).unwrap();
        let y: Vec<f64> = xs.iter().map(|x| pred.sample(x, &mut rng)).collect();
        let s = SampleSet::new(xs.clone(), y.clone()).unwrap();
        let nll = negative_log_likelihood(&g, &s).unwrap();
        let mut manual = 0.0;
        for (x, &yi) in xs.iter().zip(&y) {
            let p = g.predict_lambda(x).unwrap();
            manual -= p.log_pdf(yi, DEFAULT_TOL).unwrap();
        }
        assert_abs_diff_eq!(nll, manual, epsilon = 1e-10);

        // Additivity: duplicating every row doubles the likelihood.
        let mut xs2 = xs.clone();
        xs2.extend(xs);
        let mut y2 = y.clone();
        y2.extend(y);
        let s2 = SampleSet::new(xs2, y2).unwrap();
        let nll2 = negative_log_likelihood(&g, &s2).unwrap();
        assert_abs_diff_eq!(nll2, 2.0 * nll, epsilon = 1e-8);
    }

    #[test]
    fn nll_single_uniform_point() {
        let im = line_input();
        let cst = enumerate_basis(1, 0, 1.0);
        let g = GlamModel {
            input_model: im,
            lambda: [
                LambdaSurface { link: Link::Identity, basis: cst.clone(), coefficients: vec![0.0] },
                LambdaSurface { link: Link::Log, basis: cst.clone(), coefficients: vec![0.0] },
                LambdaSurface { link: Link::Identity, basis: cst.clone(), coefficients: vec![1.0] },
                LambdaSurface { link: Link::Identity, basis: cst, coefficients: vec![1.0] },
            ],
        };
        let s = SampleSet::new(vec![vec![0.5]], vec![0.0]).unwrap();
        let nll = negative_log_likelihood(&g, &s).unwrap();
        assert_abs_diff_eq!(nll, std::f64::consts::LN_2, epsilon = 1e-9);
    }

    #[test]
    fn fgls_detects_homoskedastic_linear_structure() {
        let im = line_input();
        let mut rng = substream(32, Stream::Design);
        let xs = im.sample(&mut rng, 220);
        let y: Vec<f64> = xs
            .iter()
            .map(|x| 1.0 + 2.0 * x[0] + 0.05 * normal_quantile(rng::uniform_open01(&mut rng)))
            .collect();
        let s = SampleSet::new(xs, y).unwrap();
        let cfg = FitConfig {
            degrees_mean: vec![0, 1, 2, 3],
            degrees_var: vec![0, 1, 2],
            ..Default::default()
        };
        let sel = fgls_select(&s, &im, &cfg).unwrap();
        assert!(sel.mean_basis.indices.iter().any(|a| a.0 == vec![1]));
        // Homoskedastic noise: the variance basis stays constant.
        assert_eq!(sel.var_basis.len(), 1, "var basis: {:?}", sel.var_basis.indices);
        // Each WLS refit is at least as good as the carried-over solution.
        for [before, after] in &sel.wls_rss {
            assert!(after <= &(before * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn fgls_zero_noise_recovers_quadratic_mean() {
        let im = line_input();
        let mut rng = substream(33, Stream::Design);
        let xs = im.sample(&mut rng, 120);
        let y: Vec<f64> = xs.iter().map(|x| (x[0] - 0.3) * (x[0] + 0.7)).collect();
        let s = SampleSet::new(xs, y).unwrap();
        let cfg = FitConfig {
            degrees_mean: vec![0, 1, 2, 3],
            degrees_var: vec![0, 1],
            ..Default::default()
        };
        let sel = fgls_select(&s, &im, &cfg).unwrap();
        assert!(sel.mean_loo < 1e-10, "mean loo = {}", sel.mean_loo);
        assert!(sel.mean_basis.indices.iter().any(|a| a.0 == vec![2]));
        // All residuals hit the jitter path in at least one iteration.
        assert!(sel.jittered_residuals > 0);
    }

    #[test]
    fn fit_improves_on_initialization_and_round_trips() {
        let g = known_model();
        let mut rng = substream(34, Stream::Design);
        let xs = g.input_model.sample(&mut rng, 300);
        let mut pred = Predictor::new(&g).unwrap();
        let y: Vec<f64> = xs.iter().map(|x| pred.sample(x, &mut rng)).collect();
        let s = SampleSet::new(xs, y).unwrap();
        let cfg = FitConfig {
            degrees_mean: vec![0, 1, 2],
            degrees_var: vec![0, 1],
            qnorms_mean: vec![1.0],
            qnorms_var: vec![1.0],
            starts: 2,
            max_evals_per_dim: 300,
            min_evals: 1500,
            ..Default::default()
        };
        let (fitted, report) = fit(&s, &g.input_model, &cfg, 77).unwrap();
        assert!(report.nll_final <= report.nll_initial + 1e-9);
        assert!(report.nll_final.is_finite());
        // Location surface should land near the truth.
        for x in [0.2, 0.5, 0.8] {
            let p = fitted.predict_lambda(&[x]).unwrap();
            assert_abs_diff_eq!(p.lambda1, 1.0 + x, epsilon = 0.25);
        }
        let js = serde_json::to_string(&fitted).unwrap();
        let back: GlamModel = serde_json::from_str(&js).unwrap();
        assert_eq!(fitted, back);
    }
}
