use drawdown_core::model::{DiffusionModel, Family};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Euler–Maruyama on the model coefficients.
    Euler,
    /// Exact Gaussian increments; Brownian motion with drift only.
    ExactGaussian,
    /// Norm of a three-dimensional Brownian motion; the Bessel(3) model only.
    ExactNorm3d,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::ExactGaussian => "exact-gaussian",
            Scheme::ExactNorm3d => "exact-norm3d",
        }
    }
}

/// Default size of the coupled `dt` / `dt/2` subsample.
pub const RICHARDSON_PATHS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    /// Paths still running at this time are censored.
    pub horizon: f64,
    pub n: u64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Continuous running extremes and crossing probabilities from Brownian bridges.
    pub bridge_correction: bool,
    /// Paths in the coupled `dt` / `dt/2` run; `None` means `min(n, 10^5)`, zero disables it.
    pub richardson_paths: Option<u64>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn new(dt: f64, n: u64, seed: u64) -> Self {
        Self {
            dt,
            horizon: 100.0,
            n,
            seed,
            scheme: Scheme::Euler,
            bridge_correction: false,
            richardson_paths: None,
            threads: None,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_bridge(mut self, on: bool) -> Self {
        self.bridge_correction = on;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_richardson(mut self, paths: u64) -> Self {
        self.richardson_paths = Some(paths);
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    pub fn richardson_size(&self) -> u64 {
        self.richardson_paths.unwrap_or(RICHARDSON_PATHS).min(self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt must be positive"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon must be positive"));
        }
        if self.n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads must be at least 1"));
        }
        Ok(())
    }
}

/// Coefficients as the stepper sees them.
#[derive(Clone, Copy)]
pub(crate) enum Dynamics<'a> {
    Gaussian { mu: f64, sigma: f64 },
    Norm3d,
    Euler { model: &'a dyn DiffusionModel, left: f64 },
}

impl<'a> Dynamics<'a> {
    pub(crate) fn new(model: &'a dyn DiffusionModel, scheme: Scheme) -> Result<Self> {
        match (scheme, model.family()) {
            (Scheme::ExactGaussian, Some(Family::Brownian(p))) => Ok(Dynamics::Gaussian { mu: p.mu, sigma: p.sigma }),
            (Scheme::ExactGaussian, _) => Err(invalid("exact-gaussian needs Brownian motion with drift")),
            (Scheme::ExactNorm3d, Some(Family::Bessel3)) => Ok(Dynamics::Norm3d),
            (Scheme::ExactNorm3d, _) => Err(invalid("exact-norm3d needs the Bessel(3) model")),
            (Scheme::Euler, _) => Ok(Dynamics::Euler { model, left: model.left_boundary() }),
        }
    }
}
