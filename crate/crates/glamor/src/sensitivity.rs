//! Sobol' sensitivity estimation on a fitted emulator.
//!
//! Two complementary routes: pick-freeze Monte Carlo on the emulator's
//! quantile representation Y = Q(U; X), and PCE post-processing, where the
//! classical indices come from an expansion of Q over (X, U) and QoI-based
//! indices from an expansion of the deterministic QoI surface over X.
//! Surrogate quality metrics (SNR, ε_Q, ε_q) live here as well since they
//! share the same sampling machinery.

use serde::{Deserialize, Serialize};

use crate::data::format_f64;
use crate::error::{Error, Result};
use crate::glam::{GlamModel, Predictor};
use crate::pce::regression::sample_variance;
use crate::pce::{aols, sobol_from_pce, AolsOptions};
use crate::report::{IndexKind, SobolEntry, SobolReport};
use crate::rng::{self, point_seed, substream, uniform_open01, Stream};

/// Relative LOO above which PCE-based reports carry a quality warning.
pub const DEFAULT_LOO_WARN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QoiSpec {
    Mean,
    Variance,
    Std,
    Quantile { alpha: f64 },
    Superquantile { alpha: f64 },
    ExpectedPayoff { strike: f64 },
    Entropy { n_mc: usize },
}

impl QoiSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            QoiSpec::Quantile { alpha } | QoiSpec::Superquantile { alpha } => {
                if !(alpha.is_finite() && 0.0 < *alpha && *alpha < 1.0) {
                    return Err(Error::Config(format!("quantile level {alpha} outside (0,1)")));
                }
            }
            QoiSpec::ExpectedPayoff { strike } => {
                if !strike.is_finite() {
                    return Err(Error::Config("payoff strike must be finite".into()));
                }
            }
            QoiSpec::Entropy { n_mc } => {
                if *n_mc == 0 {
                    return Err(Error::Config("entropy sample count must be positive".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            QoiSpec::Mean => "mean".into(),
            QoiSpec::Variance => "variance".into(),
            QoiSpec::Std => "std".into(),
            QoiSpec::Quantile { alpha } => format!("quantile({})", format_f64(*alpha)),
            QoiSpec::Superquantile { alpha } => format!("superquantile({})", format_f64(*alpha)),
            QoiSpec::ExpectedPayoff { strike } => format!("expected_payoff({})", format_f64(*strike)),
            QoiSpec::Entropy { n_mc } => format!("entropy({n_mc})"),
        }
    }
}

/// Folds a label into a substream index so different estimators and QoIs
/// never share random draws under one master seed.
fn stream_id(label: &str) -> u64 {
    let mut h = 0u64;
    for &b in label.as_bytes() {
        h = rng::mix(h ^ u64::from(b));
    }
    h
}

/// Deterministic QoI surface x ↦ QoI(λ(x)) of a fitted model. The entropy
/// variant draws a fixed per-x substream so repeated evaluations agree.
pub struct QoiSurface<'g> {
    model: &'g GlamModel,
    pred: Predictor,
    spec: QoiSpec,
    seed: u64,
}

impl<'g> QoiSurface<'g> {
    pub fn new(model: &'g GlamModel, spec: QoiSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(QoiSurface { model, pred: Predictor::new(model)?, spec, seed })
    }

    pub fn eval(&mut self, x: &[f64]) -> Result<f64> {
        self.model.input_model.check_point(x)?;
        let p = self.pred.lambda_at(x);
        match &self.spec {
            QoiSpec::Mean => p.mean(),
            QoiSpec::Variance => p.variance(),
            QoiSpec::Std => p.variance().map(f64::sqrt),
            QoiSpec::Quantile { alpha } => p.quantile(*alpha),
            QoiSpec::Superquantile { alpha } => p.superquantile(*alpha),
            QoiSpec::ExpectedPayoff { strike } => p.expected_payoff(*strike, crate::gld::DEFAULT_TOL),
            QoiSpec::Entropy { n_mc } => {
                let mut r = substream(point_seed(self.seed, x), Stream::Estimate(0));
                p.entropy_mc(&mut r, *n_mc)
            }
        }
    }
}

pub fn qoi_surface(model: &GlamModel, spec: QoiSpec, seed: u64) -> Result<QoiSurface<'_>> {
    QoiSurface::new(model, spec, seed)
}

// ---------------------------------------------------------------------------
// Pick-freeze estimation.

#[derive(Debug, Clone)]
pub struct PickFreezeOptions {
    pub n_mc: usize,
    /// 0 disables bootstrap intervals.
    pub n_boot: usize,
    pub level: f64,
}

impl Default for PickFreezeOptions {
    fn default() -> Self {
        PickFreezeOptions { n_mc: 100_000, n_boot: 0, level: 0.95 }
    }
}

/// Covariance-form first-order estimator on a pick-freeze pair.
pub fn janon_index(y: &[f64], yu: &[f64]) -> Result<f64> {
    assert_eq!(y.len(), yu.len());
    let n = y.len() as f64;
    let (mut s_prod, mut s_sum, mut s_sq) = (0.0, 0.0, 0.0);
    for (&a, &b) in y.iter().zip(yu) {
        s_prod += a * b;
        s_sum += 0.5 * (a + b);
        s_sq += 0.5 * (a * a + b * b);
    }
    let mean = s_sum / n;
    let denom = s_sq / n - mean * mean;
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::UndefinedIndex(format!("pick-freeze sample variance {denom} is not positive")));
    }
    Ok((s_prod / n - mean * mean) / denom)
}

/// Percentile bootstrap over resampled pick-freeze pairs; `complement`
/// applies the total-index transform 1 − S to every replicate.
pub fn bootstrap_ci(
    y: &[f64],
    yu: &[f64],
    complement: bool,
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<[f64; 2]> {
    assert!(n_boot >= 1 && (0.0..1.0).contains(&(1.0 - level)));
    let n = y.len();
    let mut reps = Vec::with_capacity(n_boot);
    let mut ry = vec![0.0; n];
    let mut ryu = vec![0.0; n];
    for b in 0..n_boot {
        let mut r = substream(seed, Stream::Bootstrap(b as u64));
        for i in 0..n {
            let j = (uniform_open01(&mut r) * n as f64) as usize;
            let j = j.min(n - 1);
            ry[i] = y[j];
            ryu[i] = yu[j];
        }
        let mut s = janon_index(&ry, &ryu)?;
        if complement {
            s = 1.0 - s;
        }
        reps.push(s);
    }
    reps.sort_by(f64::total_cmp);
    let lo_q = (1.0 - level) / 2.0;
    let pick = |q: f64| reps[((q * n_boot as f64) as usize).min(n_boot - 1)];
    Ok([pick(lo_q), pick(1.0 - lo_q)])
}

fn subset_mask(subset: &[usize], dim: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; dim];
    for &v in subset {
        if v >= dim {
            return Err(Error::Domain(format!("variable index {v} out of range for dimension {dim}")));
        }
        mask[v] = true;
    }
    Ok(mask)
}

/// Classical Sobol' indices of the emulated response by pick-freeze MC.
///
/// Writing Y = Q(U; X) with an independent uniform U, first-order indices
/// freeze X_u and redraw everything else including U; totals come from
/// S_T(u) = 1 − S(~u ∪ {U}), freezing the complement and U. Multi-variable
/// subsets report their closed index.
pub fn classical_sobol_pickfreeze(
    model: &GlamModel,
    subsets: &[Vec<usize>],
    opts: &PickFreezeOptions,
    seed: u64,
) -> Result<SobolReport> {
    if opts.n_mc < 100 {
        return Err(Error::Config(format!("pick-freeze needs at least 100 samples, got {}", opts.n_mc)));
    }
    let im = &model.input_model;
    let m = im.dim();
    let n = opts.n_mc;
    let mut pred = Predictor::new(model)?;

    let mut r = substream(seed, Stream::PickFreeze);
    let xa = im.sample(&mut r, n);
    let xb = im.sample(&mut r, n);
    let ua: Vec<f64> = (0..n).map(|_| uniform_open01(&mut r)).collect();
    let ub: Vec<f64> = (0..n).map(|_| uniform_open01(&mut r)).collect();

    let y: Vec<f64> = (0..n).map(|i| pred.quantile(ua[i], &xa[i])).collect();

    let mut entries = Vec::new();
    let mut boot_tag = 0u64;
    let mut with_ci = |entry: &mut SobolEntry, yv: &[f64], yuv: &[f64], complement: bool| -> Result<()> {
        if opts.n_boot > 0 {
            boot_tag += 1;
            let ci = bootstrap_ci(
                yv,
                yuv,
                complement,
                opts.n_boot,
                opts.level,
                rng::child_seed(seed, boot_tag),
            )?;
            entry.ci = Some(ci);
        }
        Ok(())
    };

    let closed_pair = |pred: &mut Predictor, mask: &[bool]| -> Vec<f64> {
        let mut xbuf = vec![0.0; m];
        (0..n)
            .map(|i| {
                for j in 0..m {
                    xbuf[j] = if mask[j] { xa[i][j] } else { xb[i][j] };
                }
                pred.quantile(ub[i], &xbuf)
            })
            .collect()
    };

    for v in 0..m {
        let mask = subset_mask(&[v], m)?;
        let yu = closed_pair(&mut pred, &mask);
        let s = janon_index(&y, &yu)?;
        let mut e = SobolEntry::new(vec![v], IndexKind::First, s);
        with_ci(&mut e, &y, &yu, false)?;
        entries.push(e);
    }
    for v in 0..m {
        // Freeze the complement and the latent U: the pair shares ua.
        let mask = subset_mask(&[v], m)?;
        let mut xbuf = vec![0.0; m];
        let yt: Vec<f64> = (0..n)
            .map(|i| {
                for j in 0..m {
                    xbuf[j] = if mask[j] { xb[i][j] } else { xa[i][j] };
                }
                pred.quantile(ua[i], &xbuf)
            })
            .collect();
        let s = 1.0 - janon_index(&y, &yt)?;
        let mut e = SobolEntry::new(vec![v], IndexKind::Total, s);
        with_ci(&mut e, &y, &yt, true)?;
        entries.push(e);
    }
    for subset in subsets {
        let mut sub = subset.clone();
        sub.sort_unstable();
        sub.dedup();
        if sub.len() < 2 {
            continue;
        }
        let mask = subset_mask(&sub, m)?;
        let yu = closed_pair(&mut pred, &mask);
        let s = janon_index(&y, &yu)?;
        let mut e = SobolEntry::new(sub, IndexKind::Closed, s);
        with_ci(&mut e, &y, &yu, false)?;
        entries.push(e);
    }

    Ok(SobolReport {
        qoi: "classical".into(),
        estimator: "pick-freeze".into(),
        n_samples: n,
        loo_error: None,
        loo_warning: false,
        entries,
        notes: vec![],
    })
}

/// Classical Sobol' indices of a raw stochastic simulator by pick-freeze,
/// for reference oracles. The simulator's noise is addressable through its
/// seed: first-order pairs redraw the noise, total-index pairs freeze it by
/// reusing the per-row substream, mirroring the latent-variable treatment
/// of the emulator estimator.
pub fn classical_sobol_pickfreeze_simulator(
    sim: &dyn crate::simulators::Simulator,
    subsets: &[Vec<usize>],
    opts: &PickFreezeOptions,
    seed: u64,
) -> Result<SobolReport> {
    use rayon::prelude::*;

    if opts.n_mc < 100 {
        return Err(Error::Config(format!("pick-freeze needs at least 100 samples, got {}", opts.n_mc)));
    }
    let im = sim.input_model();
    let m = im.dim();
    let n = opts.n_mc;

    let mut r = substream(seed, Stream::PickFreeze);
    let xa = im.sample(&mut r, n);
    let xb = im.sample(&mut r, n);
    // Noise family 0 belongs to the base sample; totals reuse it per row.
    let noise = |family: u64, i: usize| {
        substream(rng::child_seed(seed, family), Stream::Simulate(i as u64))
    };

    let y: Vec<f64> = (0..n).into_par_iter().map(|i| sim.eval(&xa[i], &mut noise(0, i))).collect();

    let mixed_eval = |mask: &[bool], family: u64| -> Vec<f64> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let x: Vec<f64> = (0..m).map(|j| if mask[j] { xa[i][j] } else { xb[i][j] }).collect();
                sim.eval(&x, &mut noise(family, i))
            })
            .collect()
    };

    let mut entries = Vec::new();
    let mut boot_tag = 0u64;
    let mut with_ci = |entry: &mut SobolEntry, yv: &[f64], yuv: &[f64], complement: bool| -> Result<()> {
        if opts.n_boot > 0 {
            boot_tag += 1;
            let ci = bootstrap_ci(
                yv,
                yuv,
                complement,
                opts.n_boot,
                opts.level,
                rng::child_seed(seed, rng::mix(boot_tag)),
            )?;
            entry.ci = Some(ci);
        }
        Ok(())
    };

    for v in 0..m {
        let mask = subset_mask(&[v], m)?;
        let yu = mixed_eval(&mask, 1 + v as u64);
        let s = janon_index(&y, &yu)?;
        let mut e = SobolEntry::new(vec![v], IndexKind::First, s);
        with_ci(&mut e, &y, &yu, false)?;
        entries.push(e);
    }
    for v in 0..m {
        // Keep the complement columns and the noise substream fixed.
        let mut inv = subset_mask(&[v], m)?;
        inv.iter_mut().for_each(|b| *b = !*b);
        let yt = mixed_eval(&inv, 0);
        let s = 1.0 - janon_index(&y, &yt)?;
        let mut e = SobolEntry::new(vec![v], IndexKind::Total, s);
        with_ci(&mut e, &y, &yt, true)?;
        entries.push(e);
    }
    for (k, subset) in subsets.iter().enumerate() {
        let mut sub = subset.clone();
        sub.sort_unstable();
        sub.dedup();
        if sub.len() < 2 {
            continue;
        }
        let mask = subset_mask(&sub, m)?;
        let yu = mixed_eval(&mask, 1 + (m + k) as u64);
        let s = janon_index(&y, &yu)?;
        let mut e = SobolEntry::new(sub, IndexKind::Closed, s);
        with_ci(&mut e, &y, &yu, false)?;
        entries.push(e);
    }

    Ok(SobolReport {
        qoi: "classical".into(),
        estimator: "pick-freeze".into(),
        n_samples: n,
        loo_error: None,
        loo_warning: false,
        entries,
        notes: vec![format!("simulator: {}", sim.name())],
    })
}

// ---------------------------------------------------------------------------
// PCE post-processing estimation.

#[derive(Debug, Clone)]
pub struct PceIndexOptions {
    pub n_pc: usize,
    pub degrees: Vec<u32>,
    pub qnorms: Vec<f64>,
    pub loo_warn: f64,
}

impl Default for PceIndexOptions {
    fn default() -> Self {
        PceIndexOptions {
            n_pc: 10_000,
            degrees: (0..=10).collect(),
            qnorms: vec![0.5, 0.75, 1.0],
            loo_warn: DEFAULT_LOO_WARN,
        }
    }
}

impl PceIndexOptions {
    fn aols_options(&self) -> AolsOptions {
        AolsOptions {
            degrees: self.degrees.clone(),
            qnorms: self.qnorms.clone(),
            max_terms: usize::MAX,
        }
    }

    fn check(&self, m: usize) -> Result<()> {
        if self.n_pc < 10 * m {
            return Err(Error::Config(format!(
                "PCE index estimation needs at least {} samples for {} inputs, got {}",
                10 * m,
                m,
                self.n_pc
            )));
        }
        Ok(())
    }
}

/// QoI-based Sobol' indices: fit a PCE to the deterministic QoI surface
/// over the M inputs and read indices off the coefficients.
pub fn qoi_sobol_pce(
    model: &GlamModel,
    spec: QoiSpec,
    subsets: &[Vec<usize>],
    opts: &PceIndexOptions,
    seed: u64,
) -> Result<SobolReport> {
    let im = &model.input_model;
    opts.check(im.dim())?;
    let label = spec.label();
    let mut surface = QoiSurface::new(model, spec, rng::child_seed(seed, stream_id("qoi-surface")))?;

    let mut r = substream(seed, Stream::Estimate(stream_id(&label)));
    let xs = im.sample(&mut r, opts.n_pc);
    let mut qs = Vec::with_capacity(opts.n_pc);
    for x in &xs {
        qs.push(surface.eval(x)?);
    }

    let fit = aols(im, &xs, &qs, &opts.aols_options())?;
    let pce = fit.model(im);
    let loo = fit.loo;
    let mut report = sobol_from_pce(&pce, subsets)?;
    report.qoi = label;
    report.estimator = "pce".into();
    report.n_samples = opts.n_pc;
    report.loo_error = Some(loo);
    report.loo_warning = loo > opts.loo_warn;
    Ok(report)
}

/// Classical Sobol' indices by expanding Y = Q(U; X) in M+1 dimensions,
/// with the latent U uniform on (0,1). Indices for the physical inputs sum
/// coefficient energy over supports that touch them; terms involving U
/// count only toward the total variance (and toward totals of inputs they
/// share support with).
pub fn classical_sobol_pce(
    model: &GlamModel,
    subsets: &[Vec<usize>],
    opts: &PceIndexOptions,
    seed: u64,
) -> Result<SobolReport> {
    let im = &model.input_model;
    let m = im.dim();
    opts.check(m + 1)?;
    if m + 1 > 64 {
        return Err(Error::Config("PCE index extraction supports at most 64 dimensions".into()));
    }
    let im_ext = im.with_latent_uniform();
    let mut pred = Predictor::new(model)?;

    let mut r = substream(seed, Stream::Estimate(stream_id("classical")));
    let xs_ext = im_ext.sample(&mut r, opts.n_pc);
    let ys: Vec<f64> = xs_ext.iter().map(|xu| pred.quantile(xu[m], &xu[..m])).collect();

    let fit = aols(&im_ext, &xs_ext, &ys, &opts.aols_options())?;
    let pce = fit.model(&im_ext);
    let d = pce.spectral_variance();
    if d <= 0.0 {
        return Err(Error::UndefinedIndex("expanded response has zero spectral variance".into()));
    }

    let mut entries = Vec::new();
    for v in 0..m {
        let mask = 1u64 << v;
        let first = pce.variance_where(|s| s != 0 && s & !mask == 0) / d;
        entries.push(SobolEntry::new(vec![v], IndexKind::First, first));
    }
    for v in 0..m {
        let mask = 1u64 << v;
        let total = pce.variance_where(|s| s & mask != 0) / d;
        entries.push(SobolEntry::new(vec![v], IndexKind::Total, total));
    }
    for subset in subsets {
        let mut sub = subset.clone();
        sub.sort_unstable();
        sub.dedup();
        if sub.len() < 2 {
            continue;
        }
        let mut mask = 0u64;
        for &v in &sub {
            if v >= m {
                return Err(Error::Domain(format!("variable index {v} out of range for dimension {m}")));
            }
            mask |= 1 << v;
        }
        let closed = pce.variance_where(|s| s != 0 && s & !mask == 0) / d;
        entries.push(SobolEntry::new(sub, IndexKind::Closed, closed));
    }

    Ok(SobolReport {
        qoi: "classical".into(),
        estimator: "pce".into(),
        n_samples: opts.n_pc,
        loo_error: Some(fit.loo),
        loo_warning: fit.loo > opts.loo_warn,
        entries,
        notes: vec![],
    })
}

// ---------------------------------------------------------------------------
// Surrogate quality metrics.

/// Signal-to-noise ratio Var[m(X)] / (Var[Y] − Var[m(X)]) of the fitted
/// emulator. The numerator comes from the mean surface, the total variance
/// from sampling one response per input, so the estimate never needs the
/// conditional variance surface to exist pointwise.
pub fn snr(model: &GlamModel, n_mc: usize, seed: u64) -> Result<f64> {
    if n_mc < 1000 {
        return Err(Error::Config(format!("SNR estimation needs at least 1000 samples, got {n_mc}")));
    }
    let mut pred = Predictor::new(model)?;
    let mut r = substream(seed, Stream::Estimate(stream_id("snr")));
    let xs = model.input_model.sample(&mut r, n_mc);
    let mut means = Vec::with_capacity(n_mc);
    let mut draws = Vec::with_capacity(n_mc);
    for x in &xs {
        let p = pred.lambda_at(x);
        means.push(p.mean()?);
        draws.push(p.quantile(uniform_open01(&mut r))?);
    }
    let signal = sample_variance(&means);
    let noise = sample_variance(&draws) - signal;
    if noise <= 0.0 || !noise.is_finite() {
        return Err(Error::UndefinedIndex(format!("residual variance {noise} is not positive")));
    }
    Ok(signal / noise)
}

/// Normalized mean squared quantile discrepancy against a reference
/// conditional quantile function, averaged over joint (U, X) draws.
pub fn error_q_metric(
    model: &GlamModel,
    reference: &mut dyn FnMut(f64, &[f64]) -> f64,
    n_test: usize,
    seed: u64,
) -> Result<f64> {
    assert!(n_test >= 2);
    let mut pred = Predictor::new(model)?;
    let mut r = substream(seed, Stream::Estimate(stream_id("error-q")));
    let xs = model.input_model.sample(&mut r, n_test);
    let mut num = 0.0;
    let mut refs = Vec::with_capacity(n_test);
    for x in &xs {
        let u = uniform_open01(&mut r);
        let yr = reference(u, x);
        let yg = pred.quantile(u, x);
        num += (yr - yg) * (yr - yg);
        refs.push(yr);
    }
    num /= n_test as f64;
    let denom = sample_variance(&refs);
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::UndefinedIndex("reference response variance is not positive".into()));
    }
    Ok(num / denom)
}

/// Normalized mean squared QoI discrepancy against a reference QoI surface.
pub fn error_qoi_metric(
    model: &GlamModel,
    spec: QoiSpec,
    reference: &mut dyn FnMut(&[f64]) -> f64,
    n_test: usize,
    seed: u64,
) -> Result<f64> {
    assert!(n_test >= 2);
    let mut surface = QoiSurface::new(model, spec, rng::child_seed(seed, stream_id("qoi-surface")))?;
    let mut r = substream(seed, Stream::Estimate(stream_id("error-qoi")));
    let xs = model.input_model.sample(&mut r, n_test);
    let mut num = 0.0;
    let mut refs = Vec::with_capacity(n_test);
    for x in &xs {
        let qr = reference(x);
        let qg = surface.eval(x)?;
        num += (qr - qg) * (qr - qg);
        refs.push(qr);
    }
    num /= n_test as f64;
    let denom = sample_variance(&refs);
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::UndefinedIndex("reference QoI variance is not positive".into()));
    }
    Ok(num / denom)
}
