//! Result type shared by every law, and the solver handle that carries model and tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DiffusionModel, QKernel};

/// How a value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Quadrature,
    Mc,
    Inversion,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ClosedForm => "closed-form",
            Method::Quadrature => "quadrature",
            Method::Mc => "mc",
            Method::Inversion => "inversion",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bookkeeping attached to a law value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Where an infinite integral was cut.
    pub truncation: Option<f64>,
    /// Integrand evaluations (outer and cached inner).
    pub evaluations: usize,
    /// Formula route for laws with several.
    pub branch: Option<String>,
    /// Mass escaping to infinity for defective laws.
    pub defective_mass: Option<f64>,
}

/// A probability or Laplace transform with an error estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawResult {
    pub value: f64,
    pub error: f64,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

impl LawResult {
    pub fn exact(value: f64, method: Method) -> Self {
        Self { value, error: 0.0, method, diagnostics: Diagnostics::default() }
    }

    pub(crate) fn with_branch(mut self, branch: &str) -> Self {
        self.diagnostics.branch = Some(branch.to_string());
        self
    }
}

/// Default relative tolerance of the quadrature pipeline.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Evaluates laws of one model at a fixed quadrature tolerance.
#[derive(Clone, Copy)]
pub struct Solver<'a> {
    pub(crate) model: &'a dyn DiffusionModel,
    pub(crate) tol: f64,
}

impl<'a> Solver<'a> {
    pub fn new(model: &'a dyn DiffusionModel) -> Self {
        Self { model, tol: DEFAULT_TOL }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn model(&self) -> &'a dyn DiffusionModel {
        self.model
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub(crate) fn kernel(&self, q: f64) -> Result<QKernel<'a>> {
        QKernel::new(self.model, q)
    }

    pub(crate) fn check_point(&self, name: &str, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be finite")));
        }
        if !self.model.contains(x) {
            return Err(Error::DomainViolation { x, what: "point is not inside the state interval" });
        }
        Ok(())
    }

    /// Boundary to pass to leftward tail searches.
    pub(crate) fn left(&self) -> Option<f64> {
        let l = self.model.left_boundary();
        l.is_finite().then_some(l)
    }
}
