//! Stochastic-simulator emulation with generalized lambda models.
//!
//! A generalized lambda model (GLaM) approximates the full response
//! distribution of a stochastic simulator: at every input point the response
//! is modeled as a four-parameter generalized lambda distribution (FKML
//! family), and each distribution parameter is expanded over the input space
//! in an orthonormal polynomial chaos basis. The model is fitted from a
//! single run per design point (no replications) by feasible generalized
//! least squares for basis selection followed by maximum likelihood for the
//! coefficients.
//!
//! On top of the fitted emulator the crate computes classical and QoI-based
//! Sobol' sensitivity indices, either by pick-freeze Monte Carlo or by
//! post-processing the coefficients of a polynomial chaos surrogate of the
//! emulator, together with signal-to-noise ratios and surrogate error
//! metrics.
//!
//! The `glamor` binary drives the full pipeline (design generation,
//! simulation, fitting, sensitivity reports, convergence studies) from a
//! TOML configuration; see the README for the CLI reference.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod glam;
pub mod gld;
pub mod input;
pub mod optim;
pub mod pce;
pub mod report;
pub mod rng;
pub mod sensitivity;
pub mod simulators;

pub use error::{Error, Result};
pub use glam::{FitConfig, FitReport, GlamModel};
pub use gld::GldParams;
pub use input::{InputModel, Marginal};
pub use pce::{BasisSet, MultiIndex, PceModel};
pub use report::{SobolEntry, SobolReport};
