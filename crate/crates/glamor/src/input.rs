//! Input probability model: independent marginals over the design space.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::uniform_open01;

/// Standard normal quantile function.
pub fn normal_quantile(u: f64) -> f64 {
    // statrs validates (0,1) internally; endpoints map to ±inf.
    if u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    Normal::standard().inverse_cdf(u)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { a: f64, b: f64 },
    Gaussian { mean: f64, std: f64 },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::Config(format!("uniform marginal needs a < b, got [{a}, {b}]")));
                }
            }
            Marginal::Gaussian { mean, std } => {
                if !(mean.is_finite() && std.is_finite() && std > 0.0) {
                    return Err(Error::Config(format!(
                        "gaussian marginal needs finite mean and std > 0, got ({mean}, {std})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => a + (b - a) * u,
            Marginal::Gaussian { mean, std } => mean + std * normal_quantile(u),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Marginal::Uniform { a, b } => x >= a && x <= b,
            Marginal::Gaussian { .. } => x.is_finite(),
        }
    }

    /// Maps x to the reference coordinate of the marginal's orthonormal
    /// polynomial family: [−1,1] for uniform (Legendre), standardized
    /// z-score for gaussian (Hermite).
    pub fn standardize(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => 2.0 * (x - a) / (b - a) - 1.0,
            Marginal::Gaussian { mean, std } => (x - mean) / std,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => 0.5 * (a + b),
            Marginal::Gaussian { mean, .. } => mean,
        }
    }
}

/// Independent joint distribution of the simulator inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputModel {
    pub marginals: Vec<Marginal>,
}

impl InputModel {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::Config("input model needs at least one marginal".into()));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(InputModel { marginals })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.marginals).all(|(&xi, m)| m.contains(xi))
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Domain(format!(
                "point has dimension {}, input model has {}",
                x.len(),
                self.dim()
            )));
        }
        for (j, (&xi, m)) in x.iter().zip(&self.marginals).enumerate() {
            if !m.contains(xi) {
                return Err(Error::Domain(format!("coordinate {j} = {xi} outside marginal {m:?}")));
            }
        }
        Ok(())
    }

    /// One i.i.d. draw from the joint distribution.
    pub fn sample_point(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        self.marginals.iter().map(|m| m.inverse_cdf(uniform_open01(rng))).collect()
    }

    pub fn sample(&self, rng: &mut impl rand::Rng, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample_point(rng)).collect()
    }

    /// Input model extended by a latent uniform level as the last
    /// coordinate; used when expanding an emulator's quantile function
    /// over (x, u) jointly.
    pub fn with_latent_uniform(&self) -> InputModel {
        let mut marginals = self.marginals.clone();
        marginals.push(Marginal::Uniform { a: 0.0, b: 1.0 });
        InputModel { marginals }
    }
}
