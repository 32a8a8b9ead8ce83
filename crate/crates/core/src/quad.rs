//! Adaptive Gauss–Kronrod quadrature, tail truncation and cached exponent integrals.
//!
//! Most laws have the shape `∫ f(u) exp(-∫ h) du`, often over a half line. The pieces here
//! are the 15-point Kronrod rule with a global error queue, a doubling search for the
//! truncation point driven by a decay witness, and [`ExponentAccumulator`] which keeps
//! cumulative values of the inner integral on a regular grid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Default cap on the number of subintervals.
pub const MAX_INTERVALS: usize = 4000;

/// Result of a definite integral.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    /// Number of integrand evaluations.
    pub evals: usize,
    /// Number of subintervals in the final partition.
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Piece> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(Error::NonFinite { at: c });
    }
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    let mut abs = k.abs();
    let mut fv = [(0.0, 0.0); 7];
    for (j, slot) in fv.iter_mut().enumerate() {
        let dx = h * XGK[j];
        let (x1, x2) = (c - dx, c + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(Error::NonFinite { at: x1 });
        }
        if !f2.is_finite() {
            return Err(Error::NonFinite { at: x2 });
        }
        k += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
        *slot = (f1, f2);
    }
    let mean = 0.5 * k;
    let mut asc = WGK[7] * (fc - mean).abs();
    for (j, (f1, f2)) in fv.iter().enumerate() {
        asc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let value = k * h;
    let abs = abs * h.abs();
    let asc = asc * h.abs();
    let mut err = ((k - g) * h).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    if abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * abs);
    }
    Ok(Piece { a, b, value, error: err })
}

/// Composite 15-point Kronrod rule on `panels` equal pieces of `[a, b]`, for integrands
/// that are smooth but carry evaluation noise an adaptive rule would chase.
pub fn integrate_fixed<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, panels: usize) -> Result<Integral> {
    let panels = panels.max(1);
    let mut failure = None;
    let mut g = |x: f64| match f(x) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    };
    let h = (b - a) / panels as f64;
    let mut out = Integral { intervals: panels, ..Integral::default() };
    for i in 0..panels {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == panels { b } else { lo + h };
        let piece = kronrod(&mut g, lo, hi)?;
        out.value += piece.value;
        out.error += piece.error;
        out.evals += 15;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Adaptive integral of `f` over `[a, b]`, stopping when the error estimate is below
/// `tol * (1 + |value|)`.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Integral> {
    integrate_with(f, a, b, tol, MAX_INTERVALS)
}

/// [`integrate`] with an explicit subinterval cap.
pub fn integrate_with<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_intervals: usize,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral::default());
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter("integration bounds must be finite".into()));
    }
    let first = kronrod(&mut f, a, b)?;
    let mut evals = 15;
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    while error > tol * (1.0 + value.abs()) {
        if heap.len() >= max_intervals {
            return Err(Error::MaxDepthExceeded { value, error });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid == worst.a || mid == worst.b {
            // interval cannot be split further in floating point
            heap.push(worst);
            return Err(Error::MaxDepthExceeded { value, error });
        }
        let left = kronrod(&mut f, worst.a, mid)?;
        let right = kronrod(&mut f, mid, worst.b)?;
        evals += 30;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        if heap.len() % 64 == 0 {
            // re-sum to shed drift from the running updates
            value = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
        }
    }
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Ok(Integral { value, error, evals, intervals: heap.len() })
}

/// [`integrate`] for integrands that can fail; the first error is returned as is.
pub fn integrate_try<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, tol: f64) -> Result<Integral> {
    let mut first = None;
    let r = integrate(
        |u| match f(u) {
            Ok(v) => v,
            Err(e) => {
                first.get_or_insert(e);
                f64::NAN
            }
        },
        a,
        b,
        tol,
    );
    match first {
        Some(e) => Err(e),
        None => r,
    }
}

/// Truncation point found by [`truncate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub point: f64,
    pub witness: f64,
}

/// Walk away from `start` in the direction of `step` until `witness(m) < threshold`.
///
/// The schedule doubles the distance each time: `start + step * 2^k`. When the walk
/// would cross a finite `boundary`, points approach it geometrically instead. Fails
/// with `TailNotDecaying` after 60 moves.
pub fn truncate<W: FnMut(f64) -> Result<f64>>(
    mut witness: W,
    start: f64,
    step: f64,
    boundary: Option<f64>,
    threshold: f64,
) -> Result<Truncation> {
    if step == 0.0 || !step.is_finite() {
        return Err(Error::InvalidParameter("truncation step must be nonzero".into()));
    }
    let bounded = boundary.filter(|l| l.is_finite() && (l - start) * step > 0.0);
    let mut last = Truncation { point: start, witness: 1.0 };
    let mut halvings = 0;
    for k in 0..60 {
        let reach = step * 2f64.powi(k);
        let m = match bounded {
            Some(l) if reach.abs() >= 0.5 * (l - start).abs() => {
                halvings += 1;
                l - (l - start) * 0.5f64.powi(halvings)
            }
            _ => start + reach,
        };
        let w = witness(m)?;
        last = Truncation { point: m, witness: w };
        if w < threshold {
            return Ok(last);
        }
    }
    Err(Error::TailNotDecaying { reached: last.point, witness: last.witness })
}

/// Integral of `f` over the half line from `start` in the direction of `step`, or up to a
/// finite `boundary`. The result is oriented left to right, so a leftward tail is `∫_l^start`.
///
/// The witness must bound the remaining tail mass beyond `m`. The truncation point is the
/// first `m` of the doubling schedule with `witness(m) < tol / 10`.
pub fn integrate_to_inf<F, W>(
    f: F,
    start: f64,
    step: f64,
    boundary: Option<f64>,
    witness: W,
    tol: f64,
) -> Result<(Integral, Truncation)>
where
    F: FnMut(f64) -> f64,
    W: FnMut(f64) -> Result<f64>,
{
    let t = truncate(witness, start, step, boundary, tol / 10.0)?;
    let (lo, hi) = if t.point >= start { (start, t.point) } else { (t.point, start) };
    Ok((integrate(f, lo, hi, tol)?, t))
}

/// Cumulative values `H(u) = ∫_base^u h(v) dv` on the grid `base + i * step`.
///
/// Grow it with [`extend_to`](Self::extend_to); afterwards [`value`](Self::value) only
/// needs `&self`, so a built accumulator can be shared. `step` may be negative.
pub struct ExponentAccumulator<H> {
    base: f64,
    step: f64,
    h: H,
    nodes: Vec<f64>,
    tol: f64,
    error: f64,
    evals: usize,
}

impl<H: Fn(f64) -> f64> ExponentAccumulator<H> {
    pub fn new(base: f64, step: f64, h: H, tol: f64) -> Self {
        assert!(step != 0.0 && step.is_finite(), "accumulator step must be nonzero");
        Self { base, step, h, nodes: vec![0.0], tol, error: 0.0, evals: 0 }
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    /// Farthest point with a cached node.
    pub fn reach(&self) -> f64 {
        self.base + self.step * (self.nodes.len() - 1) as f64
    }

    /// Accumulated error estimate of the cached nodes.
    pub fn error(&self) -> f64 {
        self.error
    }

    pub fn evals(&self) -> usize {
        self.evals
    }

    /// Extend the grid up to the last node before `u`, so that it never steps past `u`
    /// (which may be close to a finite boundary).
    pub fn extend_to(&mut self, u: f64) -> Result<()> {
        let need = ((u - self.base) / self.step).floor();
        if !need.is_finite() || need <= 0.0 {
            return Ok(());
        }
        let need = need as usize;
        while self.nodes.len() <= need {
            let i = self.nodes.len() - 1;
            let a = self.base + self.step * i as f64;
            let b = a + self.step;
            let seg = integrate(&self.h, a, b, self.tol)?;
            self.evals += seg.evals;
            self.error += seg.error;
            let last = self.nodes[i];
            self.nodes.push(last + seg.value);
        }
        Ok(())
    }

    /// `∫_base^u h`. Points past the cached grid are integrated from the last node.
    pub fn value(&self, u: f64) -> Result<f64> {
        let t = (u - self.base) / self.step;
        if t.is_nan() {
            return Err(Error::NonFinite { at: u });
        }
        let k = (t.floor().max(0.0) as usize).min(self.nodes.len() - 1);
        let node = self.base + self.step * k as f64;
        if node == u {
            return Ok(self.nodes[k]);
        }
        let rest = integrate(&self.h, node, u, self.tol)?;
        Ok(self.nodes[k] + rest.value)
    }

    /// `∫_u^v h` as a difference of cached values.
    pub fn between(&self, u: f64, v: f64) -> Result<f64> {
        Ok(self.value(v)? - self.value(u)?)
    }
}
