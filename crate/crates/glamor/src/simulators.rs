//! Reference stochastic simulators used to exercise the emulator end to
//! end, plus Latin hypercube designs and replication helpers.
//!
//! Each simulator is deterministic given (x, rng state), so a run is fully
//! reproducible from a master seed and a substream tag.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::input::{normal_quantile, InputModel, Marginal};
use crate::rng::uniform_open01;

pub trait Simulator: Sync {
    fn name(&self) -> &'static str;
    fn input_model(&self) -> &InputModel;
    fn dim(&self) -> usize {
        self.input_model().dim()
    }
    /// One stochastic response draw at x.
    fn eval(&self, x: &[f64], rng: &mut dyn RngCore) -> f64;
}

fn normal_draw(rng: &mut dyn RngCore) -> f64 {
    normal_quantile(uniform_open01(rng))
}

// ---------------------------------------------------------------------------
// Toy model: Y = sin x1 + 7 sin² x2 + exp(x1/π + x3 Z), a shifted lognormal
// whose conditional distribution is known in closed form.

#[derive(Debug, Clone)]
pub struct Toy {
    im: InputModel,
}

impl Default for Toy {
    fn default() -> Self {
        Toy::new()
    }
}

impl Toy {
    pub fn new() -> Self {
        let tau = 2.0 * std::f64::consts::PI;
        Toy {
            im: InputModel::new(vec![
                Marginal::Uniform { a: 0.0, b: tau },
                Marginal::Uniform { a: 0.0, b: tau },
                Marginal::Uniform { a: 0.25, b: 0.75 },
            ])
            .expect("fixed marginals are valid"),
        }
    }

    /// Deterministic shift and lognormal (log-mean, log-sd) at x.
    fn parts(x: &[f64]) -> (f64, f64, f64) {
        let shift = x[0].sin() + 7.0 * x[1].sin().powi(2);
        (shift, x[0] / std::f64::consts::PI, x[2])
    }
}

impl Simulator for Toy {
    fn name(&self) -> &'static str {
        "toy"
    }
    fn input_model(&self) -> &InputModel {
        &self.im
    }
    fn eval(&self, x: &[f64], rng: &mut dyn RngCore) -> f64 {
        let (shift, mu, sd) = Toy::parts(x);
        shift + (mu + sd * normal_draw(rng)).exp()
    }
}

pub fn toy_eval(x: &[f64], rng: &mut dyn RngCore) -> f64 {
    let (shift, mu, sd) = Toy::parts(x);
    shift + (mu + sd * normal_draw(rng)).exp()
}

/// Conditional response quantile; exact for every u in [0,1].
pub fn toy_quantile(u: f64, x: &[f64]) -> Result<f64> {
    Toy::new().im.check_point(x)?;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("quantile level {u} outside [0,1]")));
    }
    let (shift, mu, sd) = Toy::parts(x);
    Ok(shift + (mu + sd * normal_quantile(u)).exp())
}

/// Differential entropy of the conditional response; the shift drops out,
/// leaving the lognormal entropy with parameters (x1/π, x3).
pub fn toy_entropy(x: &[f64]) -> Result<f64> {
    Toy::new().im.check_point(x)?;
    let (_, mu, sd) = Toy::parts(x);
    Ok(mu + 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * sd * sd).ln())
}

/// Conditional mean: shift + exp(μ + σ²/2).
pub fn toy_mean(x: &[f64]) -> f64 {
    let (shift, mu, sd) = Toy::parts(x);
    shift + (mu + 0.5 * sd * sd).exp()
}

/// Conditional variance: (exp(σ²) − 1)·exp(2μ + σ²).
pub fn toy_variance(x: &[f64]) -> f64 {
    let (_, mu, sd) = Toy::parts(x);
    let s2 = sd * sd;
    (s2.exp() - 1.0) * (2.0 * mu + s2).exp()
}

/// Conditional superquantile: tail expectation of the shifted lognormal,
/// shift + e^{μ+σ²/2}·Φ(σ − Φ⁻¹(α)) / (1−α).
pub fn toy_superquantile(alpha: f64, x: &[f64]) -> f64 {
    let (shift, mu, sd) = Toy::parts(x);
    let z = normal_quantile(alpha);
    shift + (mu + 0.5 * sd * sd).exp() * crate::input::normal_cdf(sd - z) / (1.0 - alpha)
}

/// Conditional expected payoff E[(Y − K)+]: the lognormal call price with
/// effective strike K − shift, or mean − (K − shift) when that is ≤ 0.
pub fn toy_expected_payoff(strike: f64, x: &[f64]) -> f64 {
    let (shift, mu, sd) = Toy::parts(x);
    let k = strike - shift;
    let lmean = (mu + 0.5 * sd * sd).exp();
    if k <= 0.0 {
        return lmean - k;
    }
    let d2 = (mu - k.ln()) / sd;
    lmean * crate::input::normal_cdf(d2 + sd) - k * crate::input::normal_cdf(d2)
}

// ---------------------------------------------------------------------------
// Heston stochastic volatility model, Euler scheme with full truncation.

#[derive(Debug, Clone)]
pub struct HestonConfig {
    pub dt: f64,
    pub horizon: f64,
    pub y0: f64,
    pub strike: f64,
}

impl Default for HestonConfig {
    fn default() -> Self {
        HestonConfig { dt: 0.001, horizon: 1.0, y0: 1.0, strike: 1.0 }
    }
}

impl HestonConfig {
    /// Coarser step for test suites; the Euler bias stays well inside the
    /// tolerances checked there.
    pub fn desk() -> Self {
        HestonConfig { dt: 0.004, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Heston {
    pub cfg: HestonConfig,
    im: InputModel,
}

impl Heston {
    pub fn new(cfg: HestonConfig) -> Self {
        // (μ, κ, θ, σ, ρ, v0)
        let im = InputModel::new(vec![
            Marginal::Uniform { a: 0.0, b: 0.1 },
            Marginal::Uniform { a: 0.3, b: 2.0 },
            Marginal::Uniform { a: 0.02, b: 0.07 },
            Marginal::Uniform { a: 0.2, b: 0.4 },
            Marginal::Uniform { a: -1.0, b: -0.5 },
            Marginal::Uniform { a: 0.02, b: 0.07 },
        ])
        .expect("fixed marginals are valid");
        Heston { cfg, im }
    }
}

impl Simulator for Heston {
    fn name(&self) -> &'static str {
        "heston"
    }
    fn input_model(&self) -> &InputModel {
        &self.im
    }
    fn eval(&self, x: &[f64], rng: &mut dyn RngCore) -> f64 {
        heston_eval(x, &self.cfg, rng)
    }
}

/// Price Y at the horizon. Correlated Brownian increments come from the
/// Cholesky factor of the 2×2 correlation; the variance process is floored
/// at zero inside every coefficient (full truncation), so no square root of
/// a negative number can occur.
pub fn heston_eval(x: &[f64], cfg: &HestonConfig, rng: &mut dyn RngCore) -> f64 {
    let (mu, kappa, theta, sigma, rho, v0) = (x[0], x[1], x[2], x[3], x[4], x[5]);
    let steps = (cfg.horizon / cfg.dt).round().max(1.0) as usize;
    let dt = cfg.horizon / steps as f64;
    let sqdt = dt.sqrt();
    let rbar = (1.0 - rho * rho).max(0.0).sqrt();
    let mut y = cfg.y0;
    let mut v = v0;
    for _ in 0..steps {
        let z1 = normal_draw(rng);
        let z2 = normal_draw(rng);
        let dw1 = sqdt * z1;
        let dw2 = sqdt * (rho * z1 + rbar * z2);
        let vp = v.max(0.0);
        let sv = vp.sqrt();
        y += y * (mu * dt + sv * dw1);
        v += kappa * (theta - vp) * dt + sigma * sv * dw2;
    }
    y
}

pub fn heston_payoff(x: &[f64], cfg: &HestonConfig, strike: f64, rng: &mut dyn RngCore) -> f64 {
    (heston_eval(x, cfg, rng) - strike).max(0.0)
}

// ---------------------------------------------------------------------------
// Stochastic SIR epidemic as a race of exponential clocks (Gillespie).

#[derive(Debug, Clone)]
pub struct SirConfig {
    pub population: u64,
}

impl Default for SirConfig {
    fn default() -> Self {
        SirConfig { population: 2000 }
    }
}

impl SirConfig {
    /// Marginals scale with the population: S0 over [0.8P, 0.9P], I0 over
    /// [0.01P, 0.1P], contact and recovery rates over [0.5, 0.7].
    pub fn input_model(&self) -> InputModel {
        let p = self.population as f64;
        InputModel::new(vec![
            Marginal::Uniform { a: 0.80 * p, b: 0.90 * p },
            Marginal::Uniform { a: 0.01 * p, b: 0.10 * p },
            Marginal::Uniform { a: 0.5, b: 0.7 },
            Marginal::Uniform { a: 0.5, b: 0.7 },
        ])
        .expect("fixed marginals are valid")
    }
}

#[derive(Debug, Clone)]
pub struct Sir {
    pub cfg: SirConfig,
    im: InputModel,
}

impl Sir {
    pub fn new(cfg: SirConfig) -> Self {
        let im = cfg.input_model();
        Sir { cfg, im }
    }
}

impl Simulator for Sir {
    fn name(&self) -> &'static str {
        "sir"
    }
    fn input_model(&self) -> &InputModel {
        &self.im
    }
    fn eval(&self, x: &[f64], rng: &mut dyn RngCore) -> f64 {
        sir_eval(x, &self.cfg, rng)
    }
}

fn exp_draw(rate: f64, rng: &mut dyn RngCore) -> f64 {
    -uniform_open01(rng).ln() / rate
}

/// Runs the infection/recovery race until no infectious individuals remain
/// and returns the total number of new infections (initial minus final
/// susceptibles, a nonnegative count).
pub fn sir_eval(x: &[f64], cfg: &SirConfig, rng: &mut dyn RngCore) -> f64 {
    let p = cfg.population as f64;
    let mut s = x[0].round().max(0.0);
    let mut i = x[1].round().max(1.0);
    let (beta, gamma) = (x[2], x[3]);
    debug_assert!(s + i <= p, "initial compartments exceed the population");
    let mut infections = 0.0;
    while i > 0.0 {
        let rate_inf = beta * s * i / p;
        let rate_rec = gamma * i;
        // rate_inf = 0 means the infection clock never fires.
        let t_inf = if rate_inf > 0.0 { exp_draw(rate_inf, rng) } else { f64::INFINITY };
        let t_rec = exp_draw(rate_rec, rng);
        if t_inf < t_rec {
            s -= 1.0;
            i += 1.0;
            infections += 1.0;
        } else {
            i -= 1.0;
        }
    }
    infections
}

// ---------------------------------------------------------------------------
// Designs and replication.

/// Latin hypercube design: one stratum per dimension per point, uniform
/// jitter inside each stratum, independent permutations across dimensions,
/// then the marginal inverse CDFs.
pub fn lhs(n: usize, im: &InputModel, rng: &mut dyn RngCore) -> Vec<Vec<f64>> {
    assert!(n >= 1, "design size must be positive");
    let m = im.dim();
    let mut design = vec![vec![0.0; m]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for (j, marg) in im.marginals.iter().enumerate() {
        // Fisher-Yates, driven by the same stream as the jitter.
        for k in (1..n).rev() {
            let r = (uniform_open01(rng) * (k + 1) as f64) as usize;
            perm.swap(k, r.min(k));
        }
        for (i, row) in design.iter_mut().enumerate() {
            let u = (perm[i] as f64 + uniform_open01(rng)) / n as f64;
            row[j] = marg.inverse_cdf(u);
        }
    }
    design
}

/// R independent evaluations at a fixed input.
pub fn replicate(sim: &dyn Simulator, x: &[f64], r: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    assert!(r >= 1, "replication count must be positive");
    (0..r).map(|_| sim.eval(x, rng)).collect()
}

/// Empirical quantile from an ascending-sorted sample (lower order statistic).
pub fn empirical_quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let idx = ((u * n as f64).floor() as usize).min(n - 1);
    sorted[idx]
}

/// Mean of the upper tail at and beyond the α-quantile order statistic.
pub fn empirical_superquantile(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    let k = ((alpha * n as f64).floor() as usize).min(n - 1);
    let tail = &sorted[k..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Vasicek spacing estimator of differential entropy on an ascending-sorted
/// sample, window m = ⌈√n⌉. Mildly biased low at small n; adequate for
/// reference ranking comparisons.
pub fn empirical_entropy(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    assert!(n >= 4, "entropy estimation needs at least 4 samples");
    let m = (n as f64).sqrt().ceil() as usize;
    let mut acc = 0.0;
    for i in 0..n {
        let hi = sorted[(i + m).min(n - 1)];
        let lo = sorted[i.saturating_sub(m)];
        // Duplicate-heavy samples (counts) can give zero spacings.
        let gap = (hi - lo).max(1e-300);
        acc += (n as f64 * gap / (2 * m) as f64).ln();
    }
    acc / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pce::regression::sample_variance;
    use crate::rng::{substream, Stream};
    use approx::assert_abs_diff_eq;

    #[test]
    fn toy_quantile_median_and_entropy_examples() {
        let q = toy_quantile(0.5, &[0.0, 0.0, 0.5]).unwrap();
        assert_abs_diff_eq!(q, 1.0, epsilon = 1e-12);
        let h = toy_entropy(&[0.0, 0.0, 0.5]).unwrap();
        let expected = 0.5_f64.ln() + 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert_abs_diff_eq!(h, expected, epsilon = 1e-12);
        assert!(toy_quantile(0.5, &[7.0, 0.0, 0.5]).is_err());
    }

    #[test]
    fn toy_conditional_variance_spans_reported_range() {
        let lo = toy_variance(&[0.0, 0.0, 0.25]);
        let hi = toy_variance(&[2.0 * std::f64::consts::PI, 0.0, 0.75]);
        assert_abs_diff_eq!(lo, 0.069, epsilon = 5e-3);
        assert_abs_diff_eq!(hi, 72.35, epsilon = 0.1);
    }

    #[test]
    fn toy_draws_match_analytic_moments() {
        let x = [1.3, 2.1, 0.6];
        let mut rng = substream(5, Stream::Simulate(0));
        let sample = replicate(&Toy::new(), &x, 40_000, &mut rng);
        let mean: f64 = sample.iter().sum::<f64>() / sample.len() as f64;
        let var = sample_variance(&sample);
        let se = (toy_variance(&x) / sample.len() as f64).sqrt();
        assert!((mean - toy_mean(&x)).abs() < 4.0 * se);
        assert!((var / toy_variance(&x) - 1.0).abs() < 0.1);
    }

    #[test]
    fn heston_mean_tracks_exponential_drift() {
        // Degenerate vol-of-vol: v stays at θ, so E[Y_1] = exp(μ) exactly
        // under the multiplicative Euler recursion up to O(dt) drift terms.
        let cfg = HestonConfig { dt: 0.01, ..Default::default() };
        let x = [0.08, 1.0, 0.05, 0.0, -0.7, 0.05];
        let mut rng = substream(6, Stream::Simulate(0));
        let reps = 20_000;
        let sample: Vec<f64> = (0..reps).map(|_| heston_eval(&x, &cfg, &mut rng)).collect();
        let mean: f64 = sample.iter().sum::<f64>() / reps as f64;
        let se = (sample_variance(&sample) / reps as f64).sqrt();
        assert!((mean - x[0].exp()).abs() < 3.0 * se + 1e-3, "mean {mean}");
    }

    #[test]
    fn heston_correlation_sign_leaves_mean_unchanged() {
        let cfg = HestonConfig { dt: 0.01, ..Default::default() };
        let a = [0.05, 1.2, 0.04, 0.3, -0.8, 0.04];
        let mut b = a;
        b[4] = 0.8;
        let reps = 20_000;
        let mut rng = substream(7, Stream::Simulate(0));
        let ya: Vec<f64> = (0..reps).map(|_| heston_eval(&a, &cfg, &mut rng)).collect();
        let mut rng = substream(7, Stream::Simulate(0));
        let yb: Vec<f64> = (0..reps).map(|_| heston_eval(&b, &cfg, &mut rng)).collect();
        let ma = ya.iter().sum::<f64>() / reps as f64;
        let mb = yb.iter().sum::<f64>() / reps as f64;
        let se = (sample_variance(&ya) / reps as f64).sqrt();
        assert!((ma - mb).abs() < 4.0 * se, "means {ma} vs {mb}");
    }

    #[test]
    fn sir_basic_bounds() {
        let cfg = SirConfig::default();
        let mut rng = substream(8, Stream::Simulate(0));
        // β = 0 means no infection clock ever fires.
        assert_eq!(sir_eval(&[1700.0, 100.0, 0.0, 0.6], &cfg, &mut rng), 0.0);
        for k in 0..20 {
            let mut r = substream(8, Stream::Simulate(k + 1));
            let x = [1700.0, 100.0, 0.6, 0.55];
            let out = sir_eval(&x, &cfg, &mut r);
            assert!((0.0..=1700.0).contains(&out));
        }
    }

    #[test]
    fn sir_is_deterministic_given_seed() {
        let cfg = SirConfig::default();
        let x = [1650.0, 150.0, 0.65, 0.5];
        let a = sir_eval(&x, &cfg, &mut substream(9, Stream::Simulate(3)));
        let b = sir_eval(&x, &cfg, &mut substream(9, Stream::Simulate(3)));
        assert_eq!(a, b);
    }

    #[test]
    fn lhs_stratifies_each_dimension() {
        let im = InputModel::new(vec![Marginal::Uniform { a: 0.0, b: 1.0 }]).unwrap();
        let mut rng = substream(10, Stream::Design);
        let d = lhs(4, &im, &mut rng);
        let mut quartiles: Vec<usize> = d.iter().map(|r| (r[0] * 4.0) as usize).collect();
        quartiles.sort_unstable();
        assert_eq!(quartiles, vec![0, 1, 2, 3]);

        let mut rng2 = substream(10, Stream::Design);
        assert_eq!(d, lhs(4, &im, &mut rng2));
    }

    #[test]
    fn toy_tail_closed_forms_match_replication() {
        let x = [2.0, 1.0, 0.55];
        let mut rng = substream(12, Stream::Simulate(0));
        let mut sample = replicate(&Toy::new(), &x, 60_000, &mut rng);
        sample.sort_by(f64::total_cmp);

        let sq = toy_superquantile(0.95, &x);
        let emp = empirical_superquantile(&sample, 0.95);
        assert!((sq / emp - 1.0).abs() < 0.03, "superquantile {sq} vs {emp}");

        let strike = toy_quantile(0.7, &x).unwrap();
        let pay = toy_expected_payoff(strike, &x);
        let emp: f64 =
            sample.iter().map(|y| (y - strike).max(0.0)).sum::<f64>() / sample.len() as f64;
        assert!((pay / emp - 1.0).abs() < 0.05, "payoff {pay} vs {emp}");

        // Strike below the support shift reduces to mean − K.
        let low = toy_expected_payoff(-5.0, &x);
        assert_abs_diff_eq!(low, toy_mean(&x) + 5.0, epsilon = 1e-12);

        let h = empirical_entropy(&sample);
        assert!((h - toy_entropy(&x).unwrap()).abs() < 0.1, "entropy {h}");
    }

    #[test]
    fn replicate_and_empirical_helpers() {
        let sim = Toy::new();
        let x = [0.0, 0.0, 0.5];
        let mut rng = substream(11, Stream::Simulate(0));
        assert_eq!(replicate(&sim, &x, 1, &mut rng).len(), 1);

        let sorted: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(empirical_quantile(&sorted, 0.95), 96.0);
        let sq = empirical_superquantile(&sorted, 0.95);
        assert_abs_diff_eq!(sq, 98.0, epsilon = 1e-12);
    }
}
