//! First passage and drawdown/drawup ordering laws for a generic diffusion.
//!
//! Everything is written in terms of the kernel `W_q` of [`QKernel`]. Exponents of the
//! form `exp(±∫ W_{q,1}/W_q)` are evaluated through cached [`ExponentAccumulator`]s so
//! that densities and nested integrals share one pass over the running maximum.

use crate::error::{Error, Result};
use crate::law::{Diagnostics, LawResult, Method, Solver};
use crate::model::QKernel;
use crate::quad::{integrate_try, truncate, ExponentAccumulator, Integral, Truncation};

pub(crate) type Acc<'a> = ExponentAccumulator<Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>>;

/// Steps per threshold length in the cached exponent grids.
const NODES_PER_THRESHOLD: f64 = 4.0;

/// Relative slack under which `a` and `b` count as equal for route selection.
const EQUAL_SLACK: f64 = 1e-6;

/// `∫ W_{q,1}(v, v-a) / W_q(v, v-a)` from `base`; the running maximum exponent.
pub(crate) fn drawdown_exponent<'a>(k: &QKernel<'a>, base: f64, a: f64, tol: f64) -> Acc<'a> {
    let kk = k.clone();
    ExponentAccumulator::new(base, a / NODES_PER_THRESHOLD, Box::new(move |v| kk.ratio(v, v - a)), tol)
}

/// `∫ W_{q,1}(v, v+b) / W_q(v, v+b)` from `base`, grid running leftwards.
pub(crate) fn drawup_exponent<'a>(k: &QKernel<'a>, base: f64, b: f64, tol: f64) -> Acc<'a> {
    let kk = k.clone();
    ExponentAccumulator::new(base, -b / NODES_PER_THRESHOLD, Box::new(move |v| kk.ratio(v, v + b)), tol)
}

fn ln_scale_deriv(k: &QKernel<'_>, x: f64) -> f64 {
    k.model().ln_scale_deriv(x)
}

/// `E_z{e^{-qσ_a}}` for every `z` in a range, sharing the running-maximum exponent.
pub(crate) struct DrawdownTail<'a> {
    k: QKernel<'a>,
    a: f64,
    acc: Acc<'a>,
    end: Truncation,
    tol: f64,
}

impl<'a> DrawdownTail<'a> {
    /// Exponent based at `base`; the tail is cut once the survival past `z_max` is negligible.
    pub(crate) fn new(k: &QKernel<'a>, base: f64, z_max: f64, a: f64, tol: f64) -> Result<Self> {
        let mut acc = drawdown_exponent(k, base, a, tol);
        acc.extend_to(z_max)?;
        let h0 = acc.value(z_max)?;
        let end = truncate(
            |m| {
                acc.extend_to(m)?;
                Ok((h0 - acc.value(m)?).exp())
            },
            z_max,
            4.0 * a,
            None,
            tol / 10.0,
        )?;
        Ok(Self { k: k.clone(), a, acc, end, tol })
    }

    /// Variant that keeps going on a non-decaying tail and reports the survival left over.
    fn new_defective(k: &QKernel<'a>, base: f64, z_max: f64, a: f64, tol: f64) -> Result<(Self, f64)> {
        match Self::new(k, base, z_max, a, tol) {
            Ok(t) => Ok((t, 0.0)),
            Err(Error::TailNotDecaying { reached, witness }) => {
                let mut acc = drawdown_exponent(k, base, a, tol);
                acc.extend_to(reached)?;
                let end = Truncation { point: reached, witness };
                Ok((Self { k: k.clone(), a, acc, end, tol }, witness))
            }
            Err(e) => Err(e),
        }
    }

    pub(crate) fn end(&self) -> Truncation {
        self.end
    }

    /// `E_z{e^{-qσ_a}}` as an integral over the running maximum at `σ_a`.
    pub(crate) fn at(&self, z: f64) -> Result<Integral> {
        let hz = self.acc.value(z)?;
        integrate_try(
            |w| {
                let e = ln_scale_deriv(&self.k, w) - self.k.ln_abs_w(w, w - self.a) - (self.acc.value(w)? - hz);
                Ok(e.exp())
            },
            z,
            self.end.point,
            self.tol,
        )
    }

    fn evals(&self) -> usize {
        self.acc.evals()
    }
}

/// `P_z(σ̂_b < e_q)` for every `z` in a range, sharing the running-minimum exponent.
pub(crate) struct DrawupTail<'a> {
    k: QKernel<'a>,
    b: f64,
    acc: Acc<'a>,
    end: Truncation,
    tol: f64,
}

impl<'a> DrawupTail<'a> {
    pub(crate) fn new(solver: &Solver<'a>, k: &QKernel<'a>, base: f64, z_min: f64, b: f64) -> Result<Self> {
        let tol = solver.tol;
        let mut acc = drawup_exponent(k, base, b, tol);
        acc.extend_to(z_min)?;
        let h0 = acc.value(z_min)?;
        let end = truncate(
            |m| {
                acc.extend_to(m)?;
                Ok((h0 - acc.value(m)?).exp())
            },
            z_min,
            -4.0 * b,
            solver.left(),
            tol / 10.0,
        )?;
        Ok(Self { k: k.clone(), b, acc, end, tol })
    }

    pub(crate) fn acc(&self) -> &Acc<'a> {
        &self.acc
    }

    /// `P_z(σ̂_b < e_q)` as an integral over the running minimum at `σ̂_b`.
    pub(crate) fn at(&self, z: f64) -> Result<Integral> {
        let hz = self.acc.value(z)?;
        integrate_try(
            |u| {
                let e = ln_scale_deriv(&self.k, u) - self.k.ln_abs_w(u + self.b, u) + (hz - self.acc.value(u)?);
                Ok(e.exp())
            },
            self.end.point,
            z,
            self.tol,
        )
    }
}

/// Which of the two thresholds is reached first on the event the density describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityKind {
    /// Drawdown first; the variable is `X_{σ_a} + a - b`, supported on `(x - b, x)`.
    DrawdownFirst,
    /// Drawup first; the variable is `X_{σ̂_b} + a - b`, supported on `(x, x + a)`.
    DrawupFirst,
}

/// Sub-probability density of the shifted exit level on an ordering event.
pub struct Density<'a> {
    kind: DensityKind,
    x: f64,
    a: f64,
    b: f64,
    k: QKernel<'a>,
    acc: Acc<'a>,
    tol: f64,
}

impl<'a> Density<'a> {
    fn drawdown_first(k: &QKernel<'a>, x: f64, a: f64, b: f64, tol: f64) -> Result<Self> {
        let mut acc = drawup_exponent(k, x, b, tol);
        acc.extend_to(x - a.max(b))?;
        Ok(Self { kind: DensityKind::DrawdownFirst, x, a, b, k: k.clone(), acc, tol })
    }

    fn drawup_first(k: &QKernel<'a>, x: f64, a: f64, b: f64, tol: f64) -> Result<Self> {
        let mut acc = drawdown_exponent(k, x, a, tol);
        acc.extend_to(x + a.max(b))?;
        Ok(Self { kind: DensityKind::DrawupFirst, x, a, b, k: k.clone(), acc, tol })
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    pub fn support(&self) -> (f64, f64) {
        match self.kind {
            DensityKind::DrawdownFirst => (self.x - self.b, self.x),
            DensityKind::DrawupFirst => (self.x, self.x + self.a),
        }
    }

    /// Density at `u`; zero off the support.
    pub fn eval(&self, u: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        if !(u > lo && u < hi) {
            return Ok(0.0);
        }
        let (k, x, a, b) = (&self.k, self.x, self.a, self.b);
        let e = match self.kind {
            DensityKind::DrawdownFirst => {
                ln_scale_deriv(k, u + b) + k.ln_abs_w(x, u) - 2.0 * k.ln_abs_w(u + b, u)
                    + self.acc.between(u + b - a, u)?
            }
            DensityKind::DrawupFirst => {
                ln_scale_deriv(k, u - a) + k.ln_abs_w(u, x) - 2.0 * k.ln_abs_w(u, u - a)
                    - self.acc.between(u, u + b - a)?
            }
        };
        Ok(e.exp())
    }

    /// Integral of the density over its support.
    pub fn mass(&self) -> Result<Integral> {
        let (lo, hi) = self.support();
        integrate_try(|u| self.eval(u), lo, hi, self.tol)
    }

    fn evals(&self) -> usize {
        self.acc.evals()
    }
}

/// Formula route for the ordering probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Integrate the density of the event itself.
    Direct,
    /// One-sided transform minus the complementary ordering.
    Complement,
}

impl Route {
    fn tag(self, drawdown: bool) -> &'static str {
        match (self, drawdown) {
            (Route::Direct, true) => "drawdown-first-density",
            (Route::Direct, false) => "drawup-first-density",
            (Route::Complement, true) => "drawdown-transform-minus-drawup-first",
            (Route::Complement, false) => "drawup-transform-minus-drawdown-first",
        }
    }
}

fn near_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= EQUAL_SLACK * a.max(b)
}

fn quadrature(value: f64, error: f64, evaluations: usize) -> LawResult {
    LawResult {
        value,
        error,
        method: Method::Quadrature,
        diagnostics: Diagnostics { evaluations, ..Diagnostics::default() },
    }
}

impl<'a> Solver<'a> {
    fn check_rate(&self, q: f64) -> Result<()> {
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::InvalidParameter("q must be nonnegative".into()));
        }
        Ok(())
    }

    fn check_threshold(&self, name: &str, v: f64) -> Result<()> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be positive")));
        }
        Ok(())
    }

    /// `E_x{e^{-qτ_y}; τ_y < τ_z}` for `x` strictly between `y` and `z`.
    pub fn exit_transform(&self, q: f64, x: f64, y: f64, z: f64) -> Result<LawResult> {
        self.check_rate(q)?;
        for (n, v) in [("x", x), ("y", y), ("z", z)] {
            self.check_point(n, v)?;
        }
        if !((x - y) * (z - x) > 0.0) {
            return Err(Error::GeometryViolation(format!("x = {x} is not strictly between y = {y} and z = {z}")));
        }
        let k = self.kernel(q)?;
        let value = k.w_ratio(x, z, y, z);
        Ok(LawResult::exact(value.clamp(0.0, 1.0), Method::Quadrature))
    }

    /// `P_m(τ_n^- < σ̂_b ∧ e_q)`: reach `n` from above before a drawup of size `b`.
    pub fn down_before_drawup(&self, q: f64, m: f64, n: f64, b: f64) -> Result<LawResult> {
        self.check_rate(q)?;
        self.check_threshold("b", b)?;
        self.check_point("m", m)?;
        self.check_point("n", n)?;
        if n > m {
            return Err(Error::GeometryViolation(format!("lower level n = {n} exceeds m = {m}")));
        }
        if n == m {
            return Ok(LawResult::exact(1.0, Method::Quadrature));
        }
        let k = self.kernel(q)?;
        let r = integrate_try(|v| Ok(k.ratio(v, v + b)), n, m, self.tol)?;
        Ok(quadrature(r.value.exp(), r.error * r.value.exp(), r.evals))
    }

    /// `P_n(τ_m^+ < σ_a ∧ e_q)`: reach `m` from below before a drawdown of size `a`.
    pub fn up_before_drawdown(&self, q: f64, n: f64, m: f64, a: f64) -> Result<LawResult> {
        self.check_rate(q)?;
        self.check_threshold("a", a)?;
        self.check_point("n", n)?;
        self.check_point("m", m)?;
        self.check_point("n - a", n - a)?;
        if n > m {
            return Err(Error::GeometryViolation(format!("lower level n = {n} exceeds m = {m}")));
        }
        if n == m {
            return Ok(LawResult::exact(1.0, Method::Quadrature));
        }
        let k = self.kernel(q)?;
        let r = integrate_try(|v| Ok(k.ratio(v, v - a)), n, m, self.tol)?;
        let value = (-r.value).exp();
        Ok(quadrature(value, r.error * value, r.evals))
    }

    /// `P_x(X̄_{σ_a} ≥ m)`.
    pub fn max_at_drawdown_survival(&self, x: f64, m: f64, a: f64) -> Result<LawResult> {
        if m < x {
            return Err(Error::GeometryViolation(format!("level m = {m} is below the start x = {x}")));
        }
        self.up_before_drawdown(0.0, x, m, a)
    }

    /// `E_x{e^{-qσ_a}}`. At `q = 0` a tail that does not decay is reported as defective mass.
    pub fn drawdown_transform(&self, q: f64, x: f64, a: f64) -> Result<LawResult> {
        self.check_rate(q)?;
        self.check_threshold("a", a)?;
        self.check_point("x", x)?;
        self.check_point("x - a", x - a)?;
        let k = self.kernel(q)?;
        let (tail, defect) = if q == 0.0 {
            DrawdownTail::new_defective(&k, x, x, a, self.tol)?
        } else {
            (DrawdownTail::new(&k, x, x, a, self.tol)?, 0.0)
        };
        let r = tail.at(x)?;
        let mut out = quadrature(r.value, r.error + tail.end().witness, r.evals + tail.evals());
        out.diagnostics.truncation = Some(tail.end().point);
        if defect > 0.0 {
            out.diagnostics.defective_mass = Some(defect);
        }
        Ok(out)
    }

    /// `P_x(σ̂_b < e_q)`, the drawup analogue of [`drawdown_transform`](Self::drawdown_transform).
    pub fn drawup_transform(&self, q: f64, x: f64, b: f64) -> Result<LawResult> {
        self.check_rate(q)?;
        self.check_threshold("b", b)?;
        self.check_point("x", x)?;
        let k = self.kernel(q)?;
        let tail = DrawupTail::new(self, &k, x, x, b)?;
        let r = tail.at(x)?;
        let mut out = quadrature(r.value, r.error + tail.end.witness, r.evals + tail.acc.evals());
        out.diagnostics.truncation = Some(tail.end.point);
        Ok(out)
    }

    fn check_ordering(&self, q: f64, x: f64, a: f64, b: f64) -> Result<()> {
        self.check_rate(q)?;
        self.check_threshold("a", a)?;
        self.check_threshold("b", b)?;
        self.check_point("x", x)?;
        self.check_point("x - max(a, b)", x - a.max(b))
    }

    /// Density of `X_{σ_a} + a - b` on `{σ_a < σ̂_b ∧ e_q}` when `a ≥ b`, otherwise of
    /// `X_{σ̂_b} + a - b` on `{σ̂_b < σ_a ∧ e_q}`.
    pub fn dd_before_du_density(&self, q: f64, x: f64, a: f64, b: f64) -> Result<Density<'a>> {
        self.check_ordering(q, x, a, b)?;
        let k = self.kernel(q)?;
        if a >= b {
            Density::drawdown_first(&k, x, a, b, self.tol)
        } else {
            Density::drawup_first(&k, x, a, b, self.tol)
        }
    }

    /// Density of `X_{σ̂_b} + a - b` on `{σ̂_b < σ_a ∧ e_q}` when `b ≥ a`, otherwise of
    /// `X_{σ_a} + a - b` on `{σ_a < σ̂_b ∧ e_q}`.
    pub fn du_before_dd_density(&self, q: f64, x: f64, a: f64, b: f64) -> Result<Density<'a>> {
        self.check_ordering(q, x, a, b)?;
        let k = self.kernel(q)?;
        if b >= a {
            Density::drawup_first(&k, x, a, b, self.tol)
        } else {
            Density::drawdown_first(&k, x, a, b, self.tol)
        }
    }

    /// `P_x(σ_a < σ̂_b ∧ e_q)`.
    pub fn dd_before_du(&self, q: f64, x: f64, a: f64, b: f64) -> Result<LawResult> {
        let route = if a >= b { Route::Direct } else { Route::Complement };
        let out = self.dd_before_du_via(route, q, x, a, b)?;
        #[cfg(debug_assertions)]
        if a == b {
            let other = self.dd_before_du_via(Route::Complement, q, x, a, b)?;
            debug_assert!(
                (other.value - out.value).abs() < 1e-7 + 10.0 * (out.error + other.error),
                "routes disagree at a = b: {} vs {}",
                out.value,
                other.value
            );
        }
        Ok(out)
    }

    /// `P_x(σ_a < σ̂_b ∧ e_q)` along a chosen route. The direct route needs `a ≥ b`, the
    /// complement route `b ≥ a`, both up to a relative slack of 1e-6.
    pub fn dd_before_du_via(&self, route: Route, q: f64, x: f64, a: f64, b: f64) -> Result<LawResult> {
        self.check_ordering(q, x, a, b)?;
        let ok = match route {
            Route::Direct => a >= b || near_equal(a, b),
            Route::Complement => b >= a || near_equal(a, b),
        };
        if !ok {
            return Err(Error::InvalidParameter(format!("route {route:?} does not apply to a = {a}, b = {b}")));
        }
        let k = self.kernel(q)?;
        let out = match route {
            Route::Direct => {
                let d = Density::drawdown_first(&k, x, a, b, self.tol)?;
                let r = d.mass()?;
                quadrature(r.value, r.error, r.evals + d.evals())
            }
            Route::Complement => {
                let tail = DrawdownTail::new(&k, x, x + b, a, self.tol)?;
                let whole = tail.at(x)?;
                let d = Density::drawup_first(&k, x, a, b, self.tol)?;
                let mut inner = 0usize;
                let mut inner_err = 0.0;
                let first = integrate_try(
                    |u| {
                        let f = d.eval(u)?;
                        if f == 0.0 {
                            return Ok(0.0);
                        }
                        let t = tail.at(u + b - a)?;
                        inner += t.evals;
                        inner_err = f64::max(inner_err, t.error);
                        Ok(f * t.value)
                    },
                    x,
                    x + a,
                    self.tol,
                )?;
                let mut o = quadrature(
                    whole.value - first.value,
                    whole.error + first.error + inner_err + tail.end().witness,
                    whole.evals + first.evals + inner + tail.evals() + d.evals(),
                );
                o.diagnostics.truncation = Some(tail.end().point);
                o
            }
        };
        Ok(out.with_branch(route.tag(true)))
    }

    /// `P_x(σ̂_b < σ_a ∧ e_q)`.
    pub fn du_before_dd(&self, q: f64, x: f64, a: f64, b: f64) -> Result<LawResult> {
        let route = if b >= a { Route::Direct } else { Route::Complement };
        self.du_before_dd_via(route, q, x, a, b)
    }

    /// `P_x(σ̂_b < σ_a ∧ e_q)` along a chosen route; mirror of
    /// [`dd_before_du_via`](Self::dd_before_du_via).
    pub fn du_before_dd_via(&self, route: Route, q: f64, x: f64, a: f64, b: f64) -> Result<LawResult> {
        self.check_ordering(q, x, a, b)?;
        let ok = match route {
            Route::Direct => b >= a || near_equal(a, b),
            Route::Complement => a >= b || near_equal(a, b),
        };
        if !ok {
            return Err(Error::InvalidParameter(format!("route {route:?} does not apply to a = {a}, b = {b}")));
        }
        let k = self.kernel(q)?;
        let out = match route {
            Route::Direct => {
                let d = Density::drawup_first(&k, x, a, b, self.tol)?;
                let r = d.mass()?;
                quadrature(r.value, r.error, r.evals + d.evals())
            }
            Route::Complement => {
                let tail = DrawupTail::new(self, &k, x, x - a, b)?;
                let whole = tail.at(x)?;
                let d = Density::drawdown_first(&k, x, a, b, self.tol)?;
                let mut inner = 0usize;
                let mut inner_err = 0.0;
                let first = integrate_try(
                    |u| {
                        let f = d.eval(u)?;
                        if f == 0.0 {
                            return Ok(0.0);
                        }
                        let t = tail.at(u + b - a)?;
                        inner += t.evals;
                        inner_err = f64::max(inner_err, t.error);
                        Ok(f * t.value)
                    },
                    x - b,
                    x,
                    self.tol,
                )?;
                let mut o = quadrature(
                    whole.value - first.value,
                    whole.error + first.error + inner_err + tail.end.witness,
                    whole.evals + first.evals + inner + tail.acc().evals() + d.evals(),
                );
                o.diagnostics.truncation = Some(tail.end.point);
                o
            }
        };
        Ok(out.with_branch(route.tag(false)))
    }
}
