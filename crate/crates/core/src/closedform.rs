//! Brownian motion with drift and the three-dimensional Bessel process.
//!
//! Both families have explicit eigenfunctions, so they double as providers for the generic
//! pipeline and as oracles for it. Hyperbolic functions are written through `exp(-2z)` so
//! that large `γa` does not overflow.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_nonnegative, ensure_positive, Error, Result};
use crate::model::{DiffusionModel, Eigenpair, Family};

/// Drift `mu` and volatility `sigma` of `dX = mu dt + sigma dB`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrownianParams {
    pub mu: f64,
    pub sigma: f64,
}

impl BrownianParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        ensure_finite("mu", mu)?;
        ensure_positive("sigma", sigma)?;
        Ok(Self { mu, sigma })
    }

    pub fn standard() -> Self {
        Self { mu: 0.0, sigma: 1.0 }
    }

    /// `δ = μ/σ²`.
    pub fn delta(&self) -> f64 {
        self.mu / (self.sigma * self.sigma)
    }

    /// `γ(q) = √(δ² + 2q/σ²)`.
    pub fn gamma(&self, q: f64) -> f64 {
        let d = self.delta();
        (d * d + 2.0 * q / (self.sigma * self.sigma)).sqrt()
    }

    fn gamma_c(&self, q: Complex64) -> Complex64 {
        let d = self.delta();
        (q * (2.0 / (self.sigma * self.sigma)) + d * d).sqrt()
    }
}

/// Brownian motion with drift as a [`DiffusionModel`]. Reference point 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianMotion {
    pub params: BrownianParams,
}

impl BrownianMotion {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        Ok(Self { params: BrownianParams::new(mu, sigma)? })
    }
}

/// Provider for Brownian motion with drift.
pub fn bm_provider(params: BrownianParams) -> Result<BrownianMotion> {
    BrownianMotion::new(params.mu, params.sigma)
}

/// Provider for the three-dimensional Bessel process.
pub fn bes3_provider() -> Bessel3 {
    Bessel3
}

struct BmEigen {
    up: f64,
    down: f64,
}

impl Eigenpair for BmEigen {
    fn ln_up(&self, x: f64) -> f64 {
        self.up * x
    }
    fn ln_down(&self, x: f64) -> f64 {
        self.down * x
    }
    fn dlog_up(&self, _x: f64) -> Option<f64> {
        Some(self.up)
    }
    fn dlog_down(&self, _x: f64) -> Option<f64> {
        Some(self.down)
    }
}

impl DiffusionModel for BrownianMotion {
    fn drift(&self, _x: f64) -> f64 {
        self.params.mu
    }
    fn volatility(&self, _x: f64) -> f64 {
        self.params.sigma
    }
    fn reference(&self) -> f64 {
        0.0
    }
    fn scale(&self, x: f64) -> f64 {
        let d = self.params.delta();
        if d == 0.0 {
            2.0 * x
        } else {
            -(-2.0 * d * x).exp_m1() / d
        }
    }
    fn scale_deriv(&self, x: f64) -> f64 {
        2.0 * (-2.0 * self.params.delta() * x).exp()
    }
    fn scale_diff(&self, x: f64, y: f64) -> f64 {
        let d = self.params.delta();
        if d == 0.0 {
            2.0 * (x - y)
        } else {
            (-2.0 * d * y).exp() * -(-2.0 * d * (x - y)).exp_m1() / d
        }
    }
    fn ln_scale_deriv(&self, x: f64) -> f64 {
        std::f64::consts::LN_2 - 2.0 * self.params.delta() * x
    }
    fn scale_diff_rel(&self, x: f64, y: f64, at: f64) -> f64 {
        let d = self.params.delta();
        if d == 0.0 {
            x - y
        } else {
            (-2.0 * d * (y - at)).exp() * -(-2.0 * d * (x - y)).exp_m1() / (2.0 * d)
        }
    }
    fn eigenpair(&self, q: f64) -> Result<Arc<dyn Eigenpair>> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::EigenfunctionUnavailable { q, reason: "rate must be positive".into() });
        }
        let (g, d) = (self.params.gamma(q), self.params.delta());
        Ok(Arc::new(BmEigen { up: g - d, down: -(g + d) }))
    }
    fn family(&self) -> Option<Family> {
        Some(Family::Brownian(self.params))
    }
    fn name(&self) -> String {
        format!("bm(mu={}, sigma={})", self.params.mu, self.params.sigma)
    }
}

/// The three-dimensional Bessel process on `(0, ∞)`. Reference point 1.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Bessel3;

pub(crate) struct Bessel3Eigen {
    nu: f64,
    ln_sinh_nu: f64,
}

fn ln_sinh(z: f64) -> f64 {
    z + (-(-2.0 * z).exp_m1()).ln() - std::f64::consts::LN_2
}

/// `coth z − 1/z`, accurate near zero.
fn coth_minus_inv(z: f64) -> f64 {
    if z < 0.1 {
        let z2 = z * z;
        z * (1.0 / 3.0 - z2 * (1.0 / 45.0 - z2 * (2.0 / 945.0 - z2 / 4725.0)))
    } else {
        1.0 / z.tanh() - 1.0 / z
    }
}

impl Bessel3Eigen {
    pub(crate) fn new(q: f64) -> Self {
        let nu = (2.0 * q).sqrt();
        Self { nu, ln_sinh_nu: ln_sinh(nu) }
    }
}

impl Eigenpair for Bessel3Eigen {
    fn ln_up(&self, x: f64) -> f64 {
        ln_sinh(self.nu * x) - x.ln() - self.ln_sinh_nu
    }
    fn ln_down(&self, x: f64) -> f64 {
        -self.nu * (x - 1.0) - x.ln()
    }
    fn dlog_up(&self, x: f64) -> Option<f64> {
        Some(self.nu * coth_minus_inv(self.nu * x))
    }
    fn dlog_down(&self, x: f64) -> Option<f64> {
        Some(-self.nu - 1.0 / x)
    }
}

/// `E e^{-qσ_a}` for Brownian motion with drift (same for every start point).
pub fn bm_drawdown_lt(p: BrownianParams, q: f64, a: f64) -> Result<f64> {
    ensure_nonnegative("q", q)?;
    ensure_positive("a", a)?;
    if q == 0.0 {
        return Ok(1.0);
    }
    Ok(bm_drawdown_lt_c(p, Complex64::new(q, 0.0), a).re)
}

/// Complex-rate version of [`bm_drawdown_lt`] for Fourier-series inversion.
pub fn bm_drawdown_lt_c(p: BrownianParams, q: Complex64, a: f64) -> Complex64 {
    let (g, d) = (p.gamma_c(q), p.delta());
    let e = (-g * (2.0 * a)).exp();
    g * 2.0 * (-g * a - d * a).exp() / (g * (e + 1.0) - (-e + 1.0) * d)
}

/// `E e^{-qσ̂_b}` for Brownian motion with drift.
pub fn bm_drawup_lt(p: BrownianParams, q: f64, b: f64) -> Result<f64> {
    let flipped = BrownianParams { mu: -p.mu, sigma: p.sigma };
    bm_drawdown_lt(flipped, q, b)
}

/// `E_x e^{-qσ_a}` for the Bessel(3) process started at `x > a`.
pub fn bes3_drawdown_lt(x: f64, q: f64, a: f64) -> Result<f64> {
    ensure_nonnegative("q", q)?;
    ensure_positive("a", a)?;
    if !(x > a) {
        return Err(Error::DomainViolation { x, what: "start point must exceed the drawdown threshold" });
    }
    if q == 0.0 {
        return Ok(1.0);
    }
    let nu = (2.0 * q).sqrt();
    let z = nu * a;
    let e = (-2.0 * z).exp();
    let sech = 2.0 * (-z).exp() / (1.0 + e);
    Ok(sech * ((x - a) / x + z.tanh() / (nu * x)))
}

/// Both ordering probabilities with the branch that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderingProbs {
    /// `P(σ_a < σ̂_b ∧ e_q)`.
    pub drawdown_first: f64,
    /// `P(σ̂_b < σ_a ∧ e_q)`.
    pub drawup_first: f64,
    /// `true` when the `a ≥ b` expressions were used.
    pub a_at_least_b: bool,
}

/// Survival-type product shared by both branches: with `z = γc`,
/// `γ/(γ²−δ²) [e^{−sδc}(γ coth z + sδ)/sinh z − γ/sinh² z] exp(−(L−c)(sδ + γ coth z))`.
fn ordering_core(g: f64, d: f64, c: f64, span: f64, sign: f64) -> f64 {
    let z = g * c;
    let e = (-2.0 * z).exp();
    let one_m = -(-2.0 * z).exp_m1();
    let coth = (1.0 + e) / one_m;
    let csch = 2.0 * (-z).exp() / one_m;
    let bracket = (-sign * d * c).exp() * (g * coth + sign * d) * csch - g * csch * csch;
    g / ((g - d) * (g + d)) * bracket * (-span * (sign * d + g * coth)).exp()
}

/// Both ordering probabilities for Brownian motion with drift, `q > 0`.
pub fn bm_prob_dd_before_du(p: BrownianParams, q: f64, a: f64, b: f64) -> Result<OrderingProbs> {
    ensure_positive("q", q)?;
    ensure_positive("a", a)?;
    ensure_positive("b", b)?;
    Ok(if a >= b {
        ordering_a_ge_b(p, q, a, b)
    } else {
        ordering_b_gt_a(p, q, a, b)
    })
}

/// The `a ≥ b` expressions evaluated regardless of the ordering of `a` and `b`.
pub fn ordering_a_ge_b(p: BrownianParams, q: f64, a: f64, b: f64) -> OrderingProbs {
    let (g, d) = (p.gamma(q), p.delta());
    let dd = ordering_core(g, d, b, a - b, 1.0);
    let up = bm_drawup_lt(p, q, b).unwrap_or(f64::NAN);
    OrderingProbs { drawdown_first: dd, drawup_first: (1.0 - dd) * up, a_at_least_b: true }
}

/// The `b > a` expressions evaluated regardless of the ordering of `a` and `b`.
pub fn ordering_b_gt_a(p: BrownianParams, q: f64, a: f64, b: f64) -> OrderingProbs {
    let (g, d) = (p.gamma(q), p.delta());
    let du = ordering_core(g, d, a, b - a, -1.0);
    let down = bm_drawdown_lt(p, q, a).unwrap_or(f64::NAN);
    OrderingProbs { drawdown_first: (1.0 - du) * down, drawup_first: du, a_at_least_b: false }
}

/// `E e^{-pE_y^q}` for Brownian motion with drift, where `E_y^q` is the time the drawdown
/// spends above `y` before an independent exponential time of rate `q`.
pub fn bm_dd_above_at_exp(params: BrownianParams, q: f64, p: f64, y: f64) -> Result<f64> {
    ensure_positive("q", q)?;
    ensure_positive("p", p)?;
    ensure_positive("y", y)?;
    Ok(bm_dd_above_at_exp_c(params, Complex64::new(q, 0.0), Complex64::new(p, 0.0), y).re)
}

/// Complex-rate version of [`bm_dd_above_at_exp`].
pub fn bm_dd_above_at_exp_c(params: BrownianParams, q: Complex64, p: Complex64, y: f64) -> Complex64 {
    let d = params.delta();
    let g = params.gamma_c(q);
    let gp = params.gamma_c(q + p);
    let big_g = gp - d;
    let e = (-g * (2.0 * y)).exp();
    let sh = -e + 1.0;
    let ch = e + 1.0;
    let n = (g - d * d / g) * sh + (ch - sh * (d / g)) * big_g;
    -(p / (q + p)) * 2.0 * (-g * y - d * y).exp() * big_g / n + 1.0
}
