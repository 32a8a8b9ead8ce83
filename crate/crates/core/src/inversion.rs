//! Numerical Laplace inversion: Gaver–Stehfest on the real axis, the Euler-summed Fourier
//! series where a complex extension is available, and iterated double inversion.

use std::cell::RefCell;
use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default single-inversion order.
pub const DEFAULT_ORDER: usize = 14;
/// Default order of each layer of [`invert2`].
pub const DEFAULT_ORDER2: usize = 12;
/// Largest supported Gaver–Stehfest order.
pub const MAX_ORDER: usize = 20;
/// Successive-order disagreement, relative to `1 + |f|`, treated as divergence.
pub const DIVERGENCE: f64 = 1e-2;
/// Slack allowed outside `[0, 1]` for probability outputs.
pub const PROBABILITY_SLACK: f64 = 1e-4;

/// A Laplace transform `q ↦ F(q)` with an optional complex extension.
pub struct TransformFn<'a> {
    real: Box<dyn Fn(f64) -> Result<f64> + 'a>,
    complex: Option<Box<dyn Fn(Complex64) -> Complex64 + 'a>>,
    probability: bool,
}

impl<'a> TransformFn<'a> {
    pub fn new(f: impl Fn(f64) -> Result<f64> + 'a) -> Self {
        Self { real: Box::new(f), complex: None, probability: false }
    }

    /// Adds an analytic continuation to complex `q`, enabling [`invert_euler`].
    pub fn with_complex(mut self, f: impl Fn(Complex64) -> Complex64 + 'a) -> Self {
        self.complex = Some(Box::new(f));
        self
    }

    /// Marks the original as a probability, so results are checked against `[0, 1]`.
    pub fn probability(mut self) -> Self {
        self.probability = true;
        self
    }

    pub fn eval(&self, q: f64) -> Result<f64> {
        (self.real)(q)
    }

    pub fn has_complex(&self) -> bool {
        self.complex.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    GaverStehfest,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub value: f64,
    /// Difference to the next lower order (Gaver–Stehfest) or to one fewer Euler term.
    pub diagnostic: f64,
    pub order: usize,
    pub algorithm: Algorithm,
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// Gaver–Stehfest weights `V_1..V_N` for even `N ≤ 20`, each from exact integer terms.
pub fn gaver_stehfest_weights(n: usize) -> Result<Vec<f64>> {
    if n < 2 || n % 2 != 0 || n > MAX_ORDER {
        return Err(Error::InvalidParameter(format!("order must be even and between 2 and {MAX_ORDER}")));
    }
    let half = n / 2;
    let mut w = Vec::with_capacity(n);
    for k in 1..=n {
        let mut acc = Neumaier::default();
        for j in (k + 1) / 2..=k.min(half) {
            let num = (j as u128).pow(half as u32) * factorial(2 * j);
            let den = factorial(half - j) * factorial(j) * factorial(j - 1) * factorial(k - j) * factorial(2 * j - k);
            acc.add(num as f64 / den as f64);
        }
        let sign = if (k + half) % 2 == 0 { 1.0 } else { -1.0 };
        w.push(sign * acc.value());
    }
    Ok(w)
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter("t must be positive".into()));
    }
    Ok(())
}

/// Gaver–Stehfest sum from precomputed transform values `F(k ln2 / t)`, `k = 1..N`.
fn gs_sum(values: &[f64], t: f64) -> Result<f64> {
    let w = gaver_stehfest_weights(values.len())?;
    let mut acc = Neumaier::default();
    for (v, f) in w.iter().zip(values) {
        acc.add(v * f);
    }
    Ok(acc.value() * std::f64::consts::LN_2 / t)
}

fn judge(value: f64, diagnostic: f64, probability: bool) -> Result<f64> {
    if !value.is_finite() || !(diagnostic <= DIVERGENCE * (1.0 + value.abs())) {
        return Err(Error::DivergentAcceleration { value, diagnostic });
    }
    if probability {
        return clamp_probability(value, diagnostic);
    }
    Ok(value)
}

/// Clamp to `[0, 1]`, failing when the excursion exceeds [`PROBABILITY_SLACK`] plus twice
/// the inversion's own error estimate.
pub fn clamp_probability(value: f64, diagnostic: f64) -> Result<f64> {
    let slack = PROBABILITY_SLACK + 2.0 * diagnostic.abs();
    if !(value >= -slack && value <= 1.0 + slack) {
        return Err(Error::DivergentAcceleration { value, diagnostic });
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Gaver–Stehfest inversion at `t` with the given even order; the diagnostic is the
/// difference to order `N − 2`.
pub fn invert(f: &TransformFn<'_>, t: f64, order: usize) -> Result<Inversion> {
    check_time(t)?;
    gaver_stehfest_weights(order)?;
    if order < 4 {
        return Err(Error::InvalidParameter("order must be at least 4".into()));
    }
    let step = std::f64::consts::LN_2 / t;
    let values = (1..=order).map(|k| f.eval(k as f64 * step)).collect::<Result<Vec<_>>>()?;
    let value = gs_sum(&values, t)?;
    let lower = gs_sum(&values[..order - 2], t)?;
    let diagnostic = (value - lower).abs();
    let value = judge(value, diagnostic, f.probability)?;
    Ok(Inversion { value, diagnostic, order, algorithm: Algorithm::GaverStehfest })
}

/// Euler-summed Fourier series (Abate–Whitt) with `A = 18.4`, 15 plain terms and an
/// 11-term binomial average. Needs the complex extension.
pub fn invert_euler(f: &TransformFn<'_>, t: f64) -> Result<Inversion> {
    invert_euler_with(f, t, 15, 11)
}

pub fn invert_euler_with(f: &TransformFn<'_>, t: f64, terms: usize, average: usize) -> Result<Inversion> {
    check_time(t)?;
    let g = f
        .complex
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("transform has no complex extension".into()))?;
    let (value, lower) = euler_layer(|z| Complex64::new(g(z).re, 0.0), t, terms, average, true);
    let (value, lower) = (value.re, lower.re);
    let diagnostic = (value - lower).abs();
    let value = judge(value, diagnostic, f.probability)?;
    Ok(Inversion { value, diagnostic, order: terms + average, algorithm: Algorithm::Euler })
}

const EULER_SHIFT: f64 = 18.4;

/// Euler-summed Fourier series at `t`, returning the estimate at `average` and `average - 1`
/// binomial terms. A `real` original lets conjugate nodes be folded into one evaluation.
fn euler_layer(
    g: impl Fn(Complex64) -> Complex64,
    t: f64,
    terms: usize,
    average: usize,
    real: bool,
) -> (Complex64, Complex64) {
    let scale = (EULER_SHIFT / 2.0).exp() / t;
    let at = |k: usize| {
        let z = Complex64::new(EULER_SHIFT, 2.0 * std::f64::consts::PI * k as f64) / (2.0 * t);
        if real || k == 0 {
            g(z)
        } else {
            (g(z) + g(z.conj())) * 0.5
        }
    };
    let mut partial = Vec::with_capacity(average + 1);
    let (mut re, mut im) = (Neumaier::default(), Neumaier::default());
    let first = 0.5 * at(0);
    re.add(first.re);
    im.add(first.im);
    for k in 1..=terms + average {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let v = sign * at(k);
        re.add(v.re);
        im.add(v.im);
        if k >= terms {
            partial.push(Complex64::new(re.value(), im.value()));
        }
    }
    let euler = |m: usize, p: &[Complex64]| {
        let mut c = 1.0;
        let mut s = Complex64::new(0.0, 0.0);
        for (k, v) in p.iter().take(m + 1).enumerate() {
            s += c * v;
            c = c * (m - k) as f64 / (k + 1) as f64;
        }
        s / 2f64.powi(m as i32)
    };
    (scale * euler(average, &partial), scale * euler(average - 1, &partial[..average]))
}

/// Iterated Euler inversion of `F(q, p)` at `(t, k)`, for transforms with an analytic
/// extension in both variables. The inner layer runs at complex `q`, so its conjugate
/// nodes are evaluated separately.
pub fn invert2_euler(f2: impl Fn(Complex64, Complex64) -> Complex64, t: f64, k: f64) -> Result<Inversion2> {
    check_time(t)?;
    check_time(k)?;
    let (terms, average) = (15, 11);
    let evaluations = RefCell::new(0usize);
    let inner = |q: Complex64, average: usize| {
        let (v, lower) = euler_layer(
            |p| {
                *evaluations.borrow_mut() += 1;
                f2(q, p)
            },
            k,
            terms,
            average,
            false,
        );
        if average == 11 { v } else { lower }
    };
    let (value, _) = euler_layer(|q| inner(q, average), t, terms, average, true);
    let (_, lower) = euler_layer(|q| inner(q, average - 1), t, terms, average, true);
    let (value, lower) = (value.re, lower.re);
    let diagnostic = (value - lower).abs();
    let value = judge(value, diagnostic, false)?;
    Ok(Inversion2 { value, diagnostic, order: terms + average, evaluations: evaluations.into_inner() })
}

/// Result of [`invert2`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion2 {
    pub value: f64,
    /// Difference to the same inversion at order `N − 2` in both layers.
    pub diagnostic: f64,
    pub order: usize,
    pub evaluations: usize,
}

/// Iterated Gaver–Stehfest inversion of `F2(q, p)` at `(t, k)`: the inner layer in `p` at
/// `k`, the outer in `q` at `t`. Transform values are memoized, so the lower-order
/// diagnostic costs nothing extra.
pub fn invert2<F>(f2: F, t: f64, k: f64, order: usize) -> Result<Inversion2>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    check_time(t)?;
    check_time(k)?;
    gaver_stehfest_weights(order)?;
    if order < 4 {
        return Err(Error::InvalidParameter("order must be at least 4".into()));
    }
    let memo: RefCell<HashMap<(usize, usize), f64>> = RefCell::new(HashMap::new());
    let (qs, ps) = (std::f64::consts::LN_2 / t, std::f64::consts::LN_2 / k);
    let cell = |i: usize, j: usize| -> Result<f64> {
        if let Some(v) = memo.borrow().get(&(i, j)) {
            return Ok(*v);
        }
        let v = f2(i as f64 * qs, j as f64 * ps)?;
        if !v.is_finite() {
            return Err(Error::NonFinite { at: i as f64 * qs });
        }
        memo.borrow_mut().insert((i, j), v);
        Ok(v)
    };
    let at_order = |n: usize| -> Result<f64> {
        let mut outer = Vec::with_capacity(n);
        for i in 1..=n {
            let row = (1..=n).map(|j| cell(i, j)).collect::<Result<Vec<_>>>()?;
            outer.push(gs_sum(&row, k)?);
        }
        gs_sum(&outer, t)
    };
    let value = at_order(order)?;
    let lower = at_order(order - 2)?;
    let diagnostic = (value - lower).abs();
    let evaluations = memo.borrow().len();
    let value = judge(value, diagnostic, false)?;
    Ok(Inversion2 { value, diagnostic, order, evaluations })
}
