//! Run configuration: a TOML file describing the data source, design
//! sizes, fitting and estimator settings, and the QoI list. Every output
//! file embeds the SHA-256 of the raw config bytes plus the effective seed,
//! which together pin a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::glam::FitConfig;
use crate::sensitivity::{PceIndexOptions, PickFreezeOptions, QoiSpec};
use crate::simulators::{Heston, HestonConfig, Simulator, Sir, SirConfig, Toy};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; mandatory (possibly via --seed), never wall-clock.
    pub seed: Option<u64>,
    /// Output directory; mandatory (possibly via --out).
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub simulator: Option<SimulatorConfig>,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub fit: FitSettings,
    #[serde(default)]
    pub sens: SensSettings,
    #[serde(default)]
    pub qoi: Vec<QoiSpec>,
    #[serde(default)]
    pub reference: Option<ReferenceConfig>,
    #[serde(default)]
    pub study: Option<StudyConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorConfig {
    /// "toy", "heston", or "sir".
    pub kind: String,
    /// Heston time step; the paper-scale value is 0.001, test suites use 0.004.
    pub dt: Option<f64>,
    /// SIR population.
    pub population: Option<u64>,
    /// Heston payoff strike.
    pub strike: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    /// Marginal distributions of the input columns, in column order.
    pub marginals: Vec<crate::input::Marginal>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    /// Single design size for fit/sens/simulate.
    pub n: Option<usize>,
    /// Design sizes for convergence studies.
    pub sizes: Option<Vec<usize>>,
    pub repetitions: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig { n: None, sizes: None, repetitions: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSettings {
    pub degrees_mean: Vec<u32>,
    pub qnorms_mean: Vec<f64>,
    pub degrees_var: Vec<u32>,
    pub qnorms_var: Vec<f64>,
    pub n_fgls: usize,
    pub shape_degree: u32,
    pub starts: usize,
    pub max_evals_per_dim: usize,
    pub min_evals: usize,
    pub min_points_factor: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        let c = FitConfig::default();
        FitSettings {
            degrees_mean: c.degrees_mean,
            qnorms_mean: c.qnorms_mean,
            degrees_var: c.degrees_var,
            qnorms_var: c.qnorms_var,
            n_fgls: c.n_fgls,
            shape_degree: c.shape_degree,
            starts: c.starts,
            max_evals_per_dim: c.max_evals_per_dim,
            min_evals: c.min_evals,
            min_points_factor: c.min_points_factor,
        }
    }
}

impl FitSettings {
    pub fn to_fit_config(&self) -> FitConfig {
        FitConfig {
            degrees_mean: self.degrees_mean.clone(),
            qnorms_mean: self.qnorms_mean.clone(),
            degrees_var: self.degrees_var.clone(),
            qnorms_var: self.qnorms_var.clone(),
            n_fgls: self.n_fgls,
            shape_degree: self.shape_degree,
            starts: self.starts,
            max_evals_per_dim: self.max_evals_per_dim,
            min_evals: self.min_evals,
            min_points_factor: self.min_points_factor,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensSettings {
    /// Sample size for PCE-based index fitting.
    pub n_pc: usize,
    /// Sample size for pick-freeze MC.
    pub n_mc: usize,
    pub n_boot: usize,
    pub level: f64,
    pub degrees: Vec<u32>,
    pub qnorms: Vec<f64>,
    /// Extra multi-variable subsets to report.
    pub subsets: Vec<Vec<usize>>,
    /// Also run the pick-freeze estimator for cross-validation.
    pub pickfreeze: bool,
}

impl Default for SensSettings {
    fn default() -> Self {
        let p = PceIndexOptions::default();
        let m = PickFreezeOptions::default();
        SensSettings {
            n_pc: p.n_pc,
            n_mc: m.n_mc,
            n_boot: m.n_boot,
            level: m.level,
            degrees: p.degrees,
            qnorms: p.qnorms,
            subsets: vec![],
            pickfreeze: false,
        }
    }
}

impl SensSettings {
    pub fn pce_options(&self) -> PceIndexOptions {
        PceIndexOptions {
            n_pc: self.n_pc,
            degrees: self.degrees.clone(),
            qnorms: self.qnorms.clone(),
            ..Default::default()
        }
    }

    pub fn pickfreeze_options(&self) -> PickFreezeOptions {
        PickFreezeOptions { n_mc: self.n_mc, n_boot: self.n_boot, level: self.level }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    /// Design points for the QoI surface.
    pub points: usize,
    /// Replications per point.
    pub replications: usize,
    /// Pick-freeze budget on the raw simulator.
    pub n_mc: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { points: 1000, replications: 1000, n_mc: 100_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    /// "analytic" (toy only) enables ε_Q/ε_qoi rows; "none" skips them.
    pub reference: String,
    /// Also estimate classical first-order indices per repetition.
    pub indices: bool,
    /// Test-set size for the error metrics.
    pub n_test: usize,
    pub snr: bool,
    /// SNR sample size per repetition.
    pub n_snr: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig { reference: "none".into(), indices: false, n_test: 10_000, snr: true, n_snr: 10_000 }
    }
}

/// A parsed config plus the hash of the exact bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub run: RunConfig,
    pub hash: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
        let hash = format!("{:x}", Sha256::digest(&bytes));
        let text = String::from_utf8(bytes)
            .map_err(|e| Error::Config(format!("config is not valid UTF-8: {e}")))?;
        let run: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("config parse failure: {e}")))?;
        run.validate()?;
        Ok(LoadedConfig { run, hash })
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.simulator, &self.data) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("config sets both a simulator and an external data path".into()))
            }
            (None, None) => {
                return Err(Error::Config("config needs either a simulator or a data path".into()))
            }
            (Some(sim), None) => {
                if !matches!(sim.kind.as_str(), "toy" | "heston" | "sir") {
                    return Err(Error::Config(format!(
                        "unknown simulator '{}'; expected toy, heston, or sir",
                        sim.kind
                    )));
                }
            }
            (None, Some(d)) => {
                if !d.path.exists() {
                    return Err(Error::Config(format!("data file {} does not exist", d.path.display())));
                }
                if d.marginals.is_empty() {
                    return Err(Error::Config("external data needs `data.marginals`".into()));
                }
            }
        }
        for q in &self.qoi {
            q.validate()?;
        }
        if let Some(s) = &self.study {
            if !matches!(s.reference.as_str(), "analytic" | "none") {
                return Err(Error::Config(format!(
                    "study reference '{}' not recognized; use analytic or none",
                    s.reference
                )));
            }
        }
        Ok(())
    }

    /// Applies CLI overrides and enforces that seed and output directory
    /// ended up set.
    pub fn resolve(&self, seed: Option<u64>, out: Option<PathBuf>) -> Result<(u64, PathBuf)> {
        let seed = seed
            .or(self.seed)
            .ok_or_else(|| Error::Config("no seed given (config `seed` or --seed)".into()))?;
        let out = out
            .or_else(|| self.out.clone())
            .ok_or_else(|| Error::Config("no output directory given (config `out` or --out)".into()))?;
        Ok((seed, out))
    }

    pub fn build_simulator(&self) -> Result<Box<dyn Simulator>> {
        let sim = self
            .simulator
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a simulator, not external data".into()))?;
        Ok(match sim.kind.as_str() {
            "toy" => Box::new(Toy::new()),
            "heston" => {
                let mut cfg = HestonConfig::default();
                if let Some(dt) = sim.dt {
                    if !(dt.is_finite() && dt > 0.0 && dt <= cfg.horizon) {
                        return Err(Error::Config(format!("heston dt {dt} out of range")));
                    }
                    cfg.dt = dt;
                }
                if let Some(k) = sim.strike {
                    cfg.strike = k;
                }
                Box::new(Heston::new(cfg))
            }
            "sir" => {
                let population = sim.population.unwrap_or(2000);
                if population < 10 {
                    return Err(Error::Config(format!("sir population {population} too small")));
                }
                Box::new(Sir::new(SirConfig { population }))
            }
            other => return Err(Error::Config(format!("unknown simulator '{other}'"))),
        })
    }

    /// Single design size, required by fit/sens/simulate.
    pub fn design_n(&self) -> Result<usize> {
        self.design
            .n
            .ok_or_else(|| Error::Config("config `design.n` is required for this command".into()))
    }

    /// Size list for studies; falls back to the single size.
    pub fn design_sizes(&self) -> Result<Vec<usize>> {
        if let Some(sizes) = &self.design.sizes {
            if sizes.is_empty() {
                return Err(Error::Config("design.sizes must not be empty".into()));
            }
            return Ok(sizes.clone());
        }
        self.design_n().map(|n| vec![n])
    }
}
