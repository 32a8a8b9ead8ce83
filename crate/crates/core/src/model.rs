//! Diffusion models and the q-kernel calculus.
//!
//! A model supplies coefficients, its scale function and, for each rate `q > 0`, the
//! increasing/decreasing solutions of `(σ²/2) f'' + μ f' = q f`. Providers work in log
//! space: they return `ln φ` and the log-derivative `φ'/φ`, which keeps the two-point
//! kernel `W_q` finite even when the eigenfunctions themselves overflow.

use std::sync::Arc;

use crate::closedform::{Bessel3, BrownianParams};
use crate::error::{ensure_nonnegative, Error, Result};

/// Log-space access to the pair `(φ⁺, φ⁻)` at a fixed rate.
pub trait Eigenpair: Send + Sync {
    /// `ln φ⁺(x)`.
    fn ln_up(&self, x: f64) -> f64;
    /// `ln φ⁻(x)`.
    fn ln_down(&self, x: f64) -> f64;
    /// `φ⁺'(x) / φ⁺(x)` when known analytically.
    fn dlog_up(&self, _x: f64) -> Option<f64> {
        None
    }
    /// `φ⁻'(x) / φ⁻(x)` when known analytically.
    fn dlog_down(&self, _x: f64) -> Option<f64> {
        None
    }
}

/// Closed-form families with fast paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Brownian(BrownianParams),
    Bessel3,
}

/// A regular diffusion on `(l, ∞)`.
pub trait DiffusionModel: Send + Sync {
    fn drift(&self, x: f64) -> f64;
    fn volatility(&self, x: f64) -> f64;
    /// Left end `l` of the state interval, possibly `-∞`.
    fn left_boundary(&self) -> f64 {
        f64::NEG_INFINITY
    }
    /// Point where both eigenfunctions equal one.
    fn reference(&self) -> f64;
    fn scale(&self, x: f64) -> f64;
    fn scale_deriv(&self, x: f64) -> f64;
    /// `s(x) - s(y)`; override when a cancellation-free form exists.
    fn scale_diff(&self, x: f64, y: f64) -> f64 {
        self.scale(x) - self.scale(y)
    }
    /// `ln s'(x)`; override where `s'` under- or overflows.
    fn ln_scale_deriv(&self, x: f64) -> f64 {
        self.scale_deriv(x).ln()
    }
    /// `(s(x) - s(y)) / s'(at)`.
    fn scale_diff_rel(&self, x: f64, y: f64, at: f64) -> f64 {
        self.scale_diff(x, y) * (-self.ln_scale_deriv(at)).exp()
    }
    /// Eigenfunctions at rate `q > 0`.
    fn eigenpair(&self, q: f64) -> Result<Arc<dyn Eigenpair>>;
    /// Closed-form family, if any.
    fn family(&self) -> Option<Family> {
        None
    }
    fn name(&self) -> String;

    fn contains(&self, x: f64) -> bool {
        x.is_finite() && x > self.left_boundary()
    }
}

impl DiffusionModel for Bessel3 {
    fn drift(&self, x: f64) -> f64 {
        1.0 / x
    }
    fn volatility(&self, _x: f64) -> f64 {
        1.0
    }
    fn left_boundary(&self) -> f64 {
        0.0
    }
    fn reference(&self) -> f64 {
        1.0
    }
    fn scale(&self, x: f64) -> f64 {
        -1.0 / x
    }
    fn scale_deriv(&self, x: f64) -> f64 {
        1.0 / (x * x)
    }
    fn scale_diff(&self, x: f64, y: f64) -> f64 {
        (x - y) / (x * y)
    }
    fn ln_scale_deriv(&self, x: f64) -> f64 {
        -2.0 * x.ln()
    }
    fn eigenpair(&self, q: f64) -> Result<Arc<dyn Eigenpair>> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::EigenfunctionUnavailable { q, reason: "rate must be positive".into() });
        }
        Ok(Arc::new(crate::closedform::Bessel3Eigen::new(q)))
    }
    fn family(&self) -> Option<Family> {
        Some(Family::Bessel3)
    }
    fn name(&self) -> String {
        "bes3".into()
    }
}

/// Relative half-width below which two kernel arguments count as coincident.
pub const COINCIDENT: f64 = 1e-7;

/// Central-difference step for log-derivatives of providers without analytic ones.
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// `W_q`, its derivatives and ratios for one model and rate.
///
/// `W_q(x,y) = (φ⁺(x)φ⁻(y) − φ⁺(y)φ⁻(x)) / w_q`, with `W_{q,1} = ∂_x W_q` and
/// `W_{q,2} = ∂_y W_{q,1}`. At `q = 0` it is `s(x) − s(y)`.
#[derive(Clone)]
pub struct QKernel<'a> {
    model: &'a dyn DiffusionModel,
    q: f64,
    pair: Option<Arc<dyn Eigenpair>>,
    ln_w: f64,
}

impl std::fmt::Debug for QKernel<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QKernel")
            .field("model", &self.model.name())
            .field("q", &self.q)
            .field("ln_w", &self.ln_w)
            .finish()
    }
}

/// Build the kernel of `model` at rate `q ≥ 0`.
pub fn build_kernel(model: &dyn DiffusionModel, q: f64) -> Result<QKernel<'_>> {
    QKernel::new(model, q)
}

impl<'a> QKernel<'a> {
    pub fn new(model: &'a dyn DiffusionModel, q: f64) -> Result<Self> {
        ensure_nonnegative("q", q)?;
        let k = model.reference();
        let vol = model.volatility(k);
        if !(vol > 0.0) {
            return Err(Error::NonPositiveDiffusion { x: k });
        }
        if q == 0.0 {
            return Ok(Self { model, q, pair: None, ln_w: 0.0 });
        }
        let pair = model.eigenpair(q)?;
        let mut kernel = Self { model, q, pair: Some(pair), ln_w: 0.0 };
        kernel.ln_w = kernel.ln_wronskian_at(k);
        if !kernel.ln_w.is_finite() {
            return Err(Error::EigenfunctionUnavailable { q, reason: "Wronskian is not finite".into() });
        }
        Ok(kernel)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn model(&self) -> &'a dyn DiffusionModel {
        self.model
    }

    /// `w_q`; zero-rate kernels report 1.
    pub fn wronskian(&self) -> f64 {
        self.ln_w.exp()
    }

    /// `ln[(φ⁺'φ⁻ − φ⁻'φ⁺)(x) / s'(x)]`; constant in `x` for a correct provider.
    pub fn ln_wronskian_at(&self, x: f64) -> f64 {
        match &self.pair {
            None => 0.0,
            Some(p) => {
                p.ln_up(x) + p.ln_down(x) + (self.dlog_up(x) - self.dlog_down(x)).ln()
                    - self.model.scale_deriv(x).ln()
            }
        }
    }

    pub fn phi_up(&self, x: f64) -> f64 {
        self.pair.as_ref().map_or(1.0, |p| p.ln_up(x).exp())
    }

    pub fn phi_down(&self, x: f64) -> f64 {
        self.pair.as_ref().map_or(1.0, |p| p.ln_down(x).exp())
    }

    pub fn ln_phi_up(&self, x: f64) -> f64 {
        self.pair.as_ref().map_or(0.0, |p| p.ln_up(x))
    }

    pub fn ln_phi_down(&self, x: f64) -> f64 {
        self.pair.as_ref().map_or(0.0, |p| p.ln_down(x))
    }

    /// `φ⁺'/φ⁺` at `x`.
    pub fn dlog_up(&self, x: f64) -> f64 {
        match &self.pair {
            None => 0.0,
            Some(p) => p.dlog_up(x).unwrap_or_else(|| {
                let h = fd_step(x);
                (p.ln_up(x + h) - p.ln_up(x - h)) / (2.0 * h)
            }),
        }
    }

    /// `φ⁻'/φ⁻` at `x`.
    pub fn dlog_down(&self, x: f64) -> f64 {
        match &self.pair {
            None => 0.0,
            Some(p) => p.dlog_down(x).unwrap_or_else(|| {
                let h = fd_step(x);
                (p.ln_down(x + h) - p.ln_down(x - h)) / (2.0 * h)
            }),
        }
    }

    /// `(φ⁺)''/φ⁺` from the ODE.
    pub fn d2log_up_ratio(&self, x: f64) -> f64 {
        let s2 = self.model.volatility(x).powi(2);
        2.0 / s2 * (self.q - self.model.drift(x) * self.dlog_up(x))
    }

    fn coincident(x: f64, y: f64) -> bool {
        (x - y).abs() < COINCIDENT * x.abs().max(1.0)
    }

    /// Exponents `(A1, A2) = (lnφ⁺(x)+lnφ⁻(y), lnφ⁺(y)+lnφ⁻(x))`.
    fn exponents(&self, p: &dyn Eigenpair, x: f64, y: f64) -> (f64, f64) {
        (p.ln_up(x) + p.ln_down(y), p.ln_up(y) + p.ln_down(x))
    }

    /// `W_q(x, y)`.
    pub fn w(&self, x: f64, y: f64) -> f64 {
        if Self::coincident(x, y) {
            return self.model.scale_deriv(y) * (x - y);
        }
        match &self.pair {
            None => self.model.scale_diff(x, y),
            Some(p) => {
                let (a1, a2) = self.exponents(p.as_ref(), x, y);
                let hi = a1.max(a2);
                let mag = (hi - self.ln_w).exp() * -(-(a1 - a2).abs()).exp_m1();
                if a1 >= a2 {
                    mag
                } else {
                    -mag
                }
            }
        }
    }

    /// `ln |W_q(x, y)|`.
    pub fn ln_abs_w(&self, x: f64, y: f64) -> f64 {
        if Self::coincident(x, y) {
            return (self.model.scale_deriv(y) * (x - y).abs()).ln();
        }
        match &self.pair {
            None => self.model.scale_diff(x, y).abs().ln(),
            Some(p) => {
                let (a1, a2) = self.exponents(p.as_ref(), x, y);
                a1.max(a2) - self.ln_w + (-(-(a1 - a2).abs()).exp_m1()).ln()
            }
        }
    }

    /// `W_q(x1, y1) / W_q(x2, y2)` without forming either factor.
    pub fn w_ratio(&self, x1: f64, y1: f64, x2: f64, y2: f64) -> f64 {
        let sign = ((x1 - y1).signum()) * ((x2 - y2).signum());
        sign * (self.ln_abs_w(x1, y1) - self.ln_abs_w(x2, y2)).exp()
    }

    /// `W_{q,1}(x, y)`.
    pub fn w1(&self, x: f64, y: f64) -> f64 {
        if Self::coincident(x, y) {
            return self.model.scale_deriv(y);
        }
        match &self.pair {
            None => self.model.scale_deriv(x),
            Some(p) => {
                let (a1, a2) = self.exponents(p.as_ref(), x, y);
                let hi = a1.max(a2);
                (hi - self.ln_w).exp()
                    * ((a1 - hi).exp() * self.dlog_up(x) - (a2 - hi).exp() * self.dlog_down(x))
            }
        }
    }

    /// `W_{q,2}(x, y) = ∂_y ∂_x W_q(x, y)`.
    pub fn w2(&self, x: f64, y: f64) -> f64 {
        match &self.pair {
            None => 0.0,
            Some(p) => {
                let (a1, a2) = self.exponents(p.as_ref(), x, y);
                let hi = a1.max(a2);
                (hi - self.ln_w).exp()
                    * ((a1 - hi).exp() * self.dlog_up(x) * self.dlog_down(y)
                        - (a2 - hi).exp() * self.dlog_up(y) * self.dlog_down(x))
            }
        }
    }

    /// `(W_{q,1}, W_{q,2})` at `(x, y)`.
    pub fn derivatives(&self, x: f64, y: f64) -> (f64, f64) {
        (self.w1(x, y), self.w2(x, y))
    }

    /// `W_{q,1}(x, y) / W_q(x, y)`.
    pub fn ratio(&self, x: f64, y: f64) -> f64 {
        if Self::coincident(x, y) {
            return 1.0 / (x - y);
        }
        match &self.pair {
            None => self.model.scale_deriv(x) / self.model.scale_diff(x, y),
            Some(p) => {
                let (a1, a2) = self.exponents(p.as_ref(), x, y);
                let (gp, gm) = (self.dlog_up(x), self.dlog_down(x));
                if a1 >= a2 {
                    let r = (a2 - a1).exp();
                    (gp - r * gm) / -(a2 - a1).exp_m1()
                } else {
                    let r = (a1 - a2).exp();
                    (r * gp - gm) / (a1 - a2).exp_m1()
                }
            }
        }
    }

    /// `W_q(x, y) / W_{q,1}(x, y)`; smooth through `x = y` where it vanishes.
    pub fn inv_ratio(&self, x: f64, y: f64) -> f64 {
        if Self::coincident(x, y) {
            return x - y;
        }
        1.0 / self.ratio(x, y)
    }

    /// `W_{q,2}(x, y) / W_q(x, y)`.
    pub fn w2_ratio(&self, x: f64, y: f64) -> f64 {
        match &self.pair {
            None => 0.0,
            Some(p) => {
                let (a1, a2) = self.exponents(p.as_ref(), x, y);
                let hi = a1.max(a2);
                let num = (a1 - hi).exp() * self.dlog_up(x) * self.dlog_down(y)
                    - (a2 - hi).exp() * self.dlog_up(y) * self.dlog_down(x);
                let den = -(-(a1 - a2).abs()).exp_m1() * if a1 >= a2 { 1.0 } else { -1.0 };
                num / den
            }
        }
    }
}
