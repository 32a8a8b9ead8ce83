//! Default probabilities under drawdown-driven hazards, and options written on the time
//! the drawdown spends above a barrier.

use std::cell::RefCell;
use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::closedform::{bm_dd_above_at_exp_c, bm_drawdown_lt, bm_drawdown_lt_c, BrownianParams};
use crate::error::{Error, Result};
use crate::inversion::{
    clamp_probability, invert, invert2, invert2_euler, invert_euler, TransformFn, DEFAULT_ORDER, DEFAULT_ORDER2,
};
use crate::law::{Diagnostics, LawResult, Method, Solver};
use crate::model::Family;
use crate::quad::{integrate_fixed, truncate};

/// Where the default intensity is switched on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum HazardSpec {
    /// Always on.
    ConstantRate { q: f64 },
    /// On while the drawdown exceeds `y < a`.
    DrawdownCorridor { q: f64, y: f64 },
    /// On while the process is below its starting point.
    BelowStart { q: f64 },
    /// On while the drawup is below `y ≥ a`.
    DrawupDeficit { q: f64, y: f64 },
}

impl HazardSpec {
    pub fn rate(&self) -> f64 {
        match *self {
            HazardSpec::ConstantRate { q }
            | HazardSpec::DrawdownCorridor { q, .. }
            | HazardSpec::BelowStart { q }
            | HazardSpec::DrawupDeficit { q, .. } => q,
        }
    }
}

/// Contract terms for the occupation-time products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingSpec {
    /// Drawdown barrier `y > 0`.
    pub barrier: f64,
    /// Required occupation time above the barrier.
    pub strike: f64,
    pub maturity: f64,
    pub rate: f64,
    /// Quantile level in `(0, 1]`.
    pub alpha: f64,
}

impl PricingSpec {
    fn validate_common(&self) -> Result<()> {
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::InvalidParameter("maturity must be positive".into()));
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidParameter("rate must be nonnegative".into()));
        }
        Ok(())
    }

    fn discount(&self) -> f64 {
        (-self.rate * self.maturity).exp()
    }
}

/// Payoff `f` of the quantile option, given through its derivative.
pub struct Payoff<'a> {
    derivative: Box<dyn Fn(f64) -> f64 + 'a>,
    /// `f'` vanishes beyond this level.
    support: Option<f64>,
}

impl<'a> Payoff<'a> {
    pub fn new(derivative: impl Fn(f64) -> f64 + 'a, support: Option<f64>) -> Self {
        Self { derivative: Box::new(derivative), support }
    }

    /// `f(u) = min(u, cap)`.
    pub fn capped_linear(cap: f64) -> Self {
        Self::new(move |u| if u < cap { 1.0 } else { 0.0 }, Some(cap))
    }

    /// `f(u) = u`; the outer integral is truncated where the tail probability is negligible.
    pub fn linear() -> Self {
        Self::new(|_| 1.0, None)
    }
}

/// Outcome of a price computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Price {
    pub value: f64,
    pub error: f64,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

/// Which distribution function of the occupation time is inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OccupationRoute {
    /// `P(O_T ≤ K)`.
    Direct,
    /// `P(T - O_T < T - K)`, accurate when the occupation piles up near `T`.
    Complement,
}

/// Inversion diagnostic above which the other route is tried as well.
const ROUTE_SWITCH: f64 = 1e-3;

/// Pieces of the fixed outer rule of the quantile option; the tail probabilities carry
/// inversion noise, so the outer integral is not refined adaptively.
pub const QUANTILE_PANELS: usize = 4;

/// Tolerance of the truncation search of the quantile option.
pub const QUANTILE_TOL: f64 = 1e-5;

/// Brownian closed forms extend to complex rates, so both layers use the Euler series.
fn brownian_occupation_exceeds(params: BrownianParams, y: f64, strike: f64, maturity: f64) -> Result<(f64, f64, usize)> {
    if strike == 0.0 {
        let f = TransformFn::new(|q| Ok(bm_drawdown_lt(params, q, y)? / q))
            .with_complex(|q| bm_drawdown_lt_c(params, q, y) / q)
            .probability();
        let r = invert_euler(&f, maturity)?;
        return Ok((r.value, r.diagnostic, r.order));
    }
    // each route is accurate where the other struggles, so both run and the one with the
    // smaller diagnostic is kept
    let direct = invert2_euler(|q, p| bm_dd_above_at_exp_c(params, q, p, y) / (q * p), maturity, strike)
        .and_then(|r| Ok((1.0 - clamp_probability(r.value, r.diagnostic)?, r.diagnostic, r.evaluations)));
    let complement = invert2_euler(
        |q, p| bm_dd_above_at_exp_c(params, q + p, -p, y) / (p * (q + p)),
        maturity,
        maturity - strike,
    )
    .and_then(|r| Ok((clamp_probability(r.value, r.diagnostic)?, r.diagnostic, r.evaluations)));
    match (direct, complement) {
        (Ok(a), Ok(b)) => Ok(if b.1 < a.1 { b } else { a }),
        (Ok(a), Err(_)) | (Err(_), Ok(a)) => Ok(a),
        (Err(e), Err(_)) => Err(e),
    }
}

impl<'a> Solver<'a> {
    /// Probability that default happens before a drawdown of size `a`.
    pub fn default_before_drawdown(&self, x: f64, hazard: HazardSpec, a: f64) -> Result<LawResult> {
        let q = hazard.rate();
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::InvalidParameter("q must be positive".into()));
        }
        let survive = match hazard {
            HazardSpec::ConstantRate { q } => self.drawdown_transform(q, x, a)?,
            HazardSpec::DrawdownCorridor { q, y } => self.occ_dd_above_until_dd(q, x, y, a)?,
            HazardSpec::BelowStart { q } => self.occ_below_start_until_dd(q, x, a)?,
            HazardSpec::DrawupDeficit { q, y } => self.occ_du_below_until_dd(q, x, y, a)?,
        };
        Ok(LawResult { value: (1.0 - survive.value).clamp(0.0, 1.0), ..survive })
    }

    /// `P_x(σ_a < σ̂_b ∧ e_q)` with `e_q` read as a default time.
    pub fn dd_before_du_before_default(&self, x: f64, q: f64, a: f64, b: f64) -> Result<LawResult> {
        self.dd_before_du(q, x, a, b)
    }

    /// `E_x{e^{-p E}}` with `E` the time the drawdown spends above `y` before `e_q`,
    /// through the closed form when the model has one. Any `p > -q` is accepted.
    fn exp_clock_transform(&self, q: f64, p: f64, x: f64, y: f64) -> Result<f64> {
        match self.model.family() {
            Some(Family::Brownian(params)) => {
                Ok(bm_dd_above_at_exp_c(params, Complex64::new(q, 0.0), Complex64::new(p, 0.0), y).re)
            }
            _ => Ok(self.dd_above_at_exp_signed(q, p, x, y)?.value),
        }
    }

    fn drawdown_lt(&self, q: f64, x: f64, a: f64) -> Result<f64> {
        match self.model.family() {
            Some(Family::Brownian(params)) => bm_drawdown_lt(params, q, a),
            _ => Ok(self.drawdown_transform(q, x, a)?.value),
        }
    }

    /// `P_x(∫_0^T 1{Y_t > y} dt > K)` and the inversion diagnostic.
    fn occupation_exceeds(&self, x: f64, y: f64, strike: f64, maturity: f64) -> Result<(f64, f64, usize)> {
        if let Some(Family::Brownian(params)) = self.model.family() {
            return brownian_occupation_exceeds(params, y, strike, maturity);
        }
        if strike == 0.0 {
            let f = TransformFn::new(|q| Ok(self.drawdown_lt(q, x, y)? / q)).probability();
            let r = invert(&f, maturity, DEFAULT_ORDER)?;
            return Ok((r.value, r.diagnostic, r.order));
        }
        let (first, second) = if strike <= 0.5 * maturity {
            (OccupationRoute::Direct, OccupationRoute::Complement)
        } else {
            (OccupationRoute::Complement, OccupationRoute::Direct)
        };
        let a = self.occupation_exceeds_via(first, x, y, strike, maturity);
        if matches!(a, Ok((_, d, _)) if d.abs() <= ROUTE_SWITCH) {
            return a;
        }
        let b = self.occupation_exceeds_via(second, x, y, strike, maturity);
        match (a, b) {
            (Ok(a), Ok(b)) => Ok(if b.1.abs() < a.1.abs() { b } else { a }),
            (Ok(a), Err(_)) => Ok(a),
            (Err(_), Ok(b)) => Ok(b),
            (Err(e), Err(_)) => Err(e),
        }
    }

    fn occupation_exceeds_via(
        &self,
        route: OccupationRoute,
        x: f64,
        y: f64,
        strike: f64,
        maturity: f64,
    ) -> Result<(f64, f64, usize)> {
        match route {
            OccupationRoute::Direct => {
                let r =
                    invert2(|q, p| Ok(self.exp_clock_transform(q, p, x, y)? / (q * p)), maturity, strike, DEFAULT_ORDER2)?;
                let below = clamp_probability(r.value, r.diagnostic)?;
                Ok((1.0 - below, r.diagnostic, r.evaluations))
            }
            OccupationRoute::Complement => {
                // the law of T - O_T: E e^{-p(e_q - E)} = q/(q+p) E e^{p E'} where E' runs
                // to an exponential time of rate q + p
                let r = invert2(
                    |q, p| Ok(self.exp_clock_transform(q + p, -p, x, y)? / (p * (q + p))),
                    maturity,
                    maturity - strike,
                    DEFAULT_ORDER2,
                )?;
                let p = clamp_probability(r.value, r.diagnostic)?;
                Ok((p, r.diagnostic, r.evaluations))
            }
        }
    }

    /// Digital paying one at `T` when the drawdown spent more than `K` above the barrier.
    pub fn parisian_digital_price(&self, x: f64, spec: &PricingSpec) -> Result<Price> {
        spec.validate_common()?;
        if !(spec.barrier > 0.0) {
            return Err(Error::InvalidParameter("barrier must be positive".into()));
        }
        if !(spec.strike > 0.0 && spec.strike < spec.maturity) {
            return Err(Error::InvalidParameter("strike must satisfy 0 < K < T".into()));
        }
        self.check_point("x", x)?;
        self.check_point("x - y", x - spec.barrier)?;
        let (p, diag, evals) = self.occupation_exceeds(x, spec.barrier, spec.strike, spec.maturity)?;
        let d = spec.discount();
        Ok(Price {
            value: d * p,
            error: d * diag,
            method: Method::Inversion,
            diagnostics: Diagnostics { evaluations: evals, ..Diagnostics::default() },
        })
    }

    /// Option paying `f` of the `α`-quantile of the drawdown over `[0, T]`.
    pub fn alpha_quantile_price(&self, x: f64, spec: &PricingSpec, payoff: &Payoff<'_>) -> Result<Price> {
        spec.validate_common()?;
        if !(spec.alpha > 0.0 && spec.alpha <= 1.0) {
            return Err(Error::InvalidParameter("alpha must lie in (0, 1]".into()));
        }
        self.check_point("x", x)?;
        let strike = (1.0 - spec.alpha) * spec.maturity;
        let cache: RefCell<HashMap<u64, f64>> = RefCell::new(HashMap::new());
        let worst = RefCell::new(0.0f64);
        let tail = |u: f64| -> Result<f64> {
            if let Some(v) = cache.borrow().get(&u.to_bits()) {
                return Ok(*v);
            }
            self.check_point("x - u", x - u)?;
            let (p, diag, _) = self.occupation_exceeds(x, u, strike, spec.maturity)?;
            let mut w = worst.borrow_mut();
            *w = w.max(diag);
            cache.borrow_mut().insert(u.to_bits(), p);
            Ok(p)
        };
        let upper = match payoff.support {
            Some(c) if c > 0.0 => c,
            Some(_) => return Ok(Price { value: 0.0, error: 0.0, method: Method::Inversion, diagnostics: Diagnostics::default() }),
            None => {
                let reach = self.model.volatility(x).abs() * spec.maturity.sqrt();
                truncate(&tail, 0.0, reach.max(1e-3), None, QUANTILE_TOL / 10.0)?.point
            }
        };
        let r = integrate_fixed(|u| Ok((payoff.derivative)(u) * tail(u)?), 0.0, upper, QUANTILE_PANELS)?;
        let d = spec.discount();
        let evaluations = cache.borrow().len();
        let error = d * (r.error + *worst.borrow() * upper);
        Ok(Price {
            value: d * r.value,
            error,
            method: Method::Inversion,
            diagnostics: Diagnostics { truncation: Some(upper), evaluations, ..Diagnostics::default() },
        })
    }
}
