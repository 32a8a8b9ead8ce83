//! Eigenfunctions of a diffusion given only its coefficients.
//!
//! Each solution is tracked through its log-derivative `g = f'/f`, which satisfies the
//! Riccati equation `g' = (2/σ²)(q − μ g) − g²`, together with `ln f`. The increasing
//! solution is an attracting equilibrium when integrating forward and the decreasing one
//! when integrating backward, so both are started from far-field anchors with the local
//! constant-coefficient value and integrated toward the window.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::model::{DiffusionModel, Eigenpair};

/// Coefficient function of the state.
pub type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Solver settings for [`NumericDiffusion`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OdeEigenConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Interval on which the eigenfunctions and the scale function are available.
    pub window: (f64, f64),
    /// First anchor distance beyond the window; doubled until the solution settles.
    pub anchor_distance: f64,
    /// Largest step as a fraction of the window width.
    pub max_step_fraction: f64,
}

impl OdeEigenConfig {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { rtol: 1e-11, atol: 1e-13, window: (lo, hi), anchor_distance: 4.0, max_step_fraction: 1.0 / 4000.0 }
    }
}

/// Settle threshold for the log-derivative between successive anchors.
const SETTLE: f64 = 1e-10;
const MAX_ANCHOR_MOVES: usize = 12;
/// Allowed drift of the log-Wronskian across the window.
const WRONSKIAN_DRIFT: f64 = 1e-6;

/// Node values of a tracked solution.
#[derive(Debug, Clone, Default)]
struct Track {
    x: Vec<f64>,
    /// Value, first and second derivative of the interpolated quantity.
    v: Vec<[f64; 3]>,
    /// Second interpolated quantity with its derivative.
    w: Vec<[f64; 2]>,
}

impl Track {
    fn push(&mut self, x: f64, v: [f64; 3], w: [f64; 2]) {
        self.x.push(x);
        self.v.push(v);
        self.w.push(w);
    }

    fn sorted(mut self) -> Self {
        if self.x.len() > 1 && self.x[0] > self.x[1] {
            self.x.reverse();
            self.v.reverse();
            self.w.reverse();
        }
        self
    }

    fn locate(&self, x: f64) -> Option<(usize, f64, f64)> {
        let n = self.x.len();
        let slack = 1e-12 * x.abs().max(1.0);
        if n < 2 || !(x >= self.x[0] - slack && x <= self.x[n - 1] + slack) {
            return None;
        }
        let x = x.clamp(self.x[0], self.x[n - 1]);
        let i = self.x.partition_point(|&t| t <= x).clamp(1, n - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        Some((i, h, (x - self.x[i]) / h))
    }

    /// Quintic Hermite interpolation of the first quantity.
    fn value(&self, x: f64) -> f64 {
        let Some((i, h, t)) = self.locate(x) else { return f64::NAN };
        let (a, b) = (self.v[i], self.v[i + 1]);
        let (t2, t3) = (t * t, t * t * t);
        let (t4, t5) = (t3 * t, t3 * t2);
        let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
        let h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h5 = 0.5 * (t3 - 2.0 * t4 + t5);
        h0 * a[0] + h1 * h * a[1] + h2 * h * h * a[2] + h3 * b[0] + h4 * h * b[1] + h5 * h * h * b[2]
    }

    /// Cubic Hermite interpolation of the first derivative of the first quantity.
    fn slope(&self, x: f64) -> f64 {
        let Some((i, h, t)) = self.locate(x) else { return f64::NAN };
        cubic(t, h, self.v[i][1], self.v[i][2], self.v[i + 1][1], self.v[i + 1][2])
    }

    /// Cubic Hermite interpolation of the second quantity.
    fn second(&self, x: f64) -> f64 {
        let Some((i, h, t)) = self.locate(x) else { return f64::NAN };
        cubic(t, h, self.w[i][0], self.w[i][1], self.w[i + 1][0], self.w[i + 1][1])
    }
}

fn cubic(t: f64, h: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
    let (t2, t3) = (t * t, t * t * t);
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * d0 + (3.0 * t2 - 2.0 * t3) * y1 + (t3 - t2) * h * d1
}

/// Dormand–Prince 5(4) over `[x0, x1]` (either direction). Calls `visit` at every
/// accepted point including the start.
fn dopri<F, V>(rhs: F, x0: f64, y0: [f64; 2], x1: f64, rtol: f64, atol: f64, hmax: f64, mut visit: V) -> Result<[f64; 2]>
where
    F: Fn(f64, [f64; 2]) -> [f64; 2],
    V: FnMut(f64, [f64; 2], [f64; 2]),
{
    const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 6] = [
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] =
        [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

    let dir = (x1 - x0).signum();
    let span = (x1 - x0).abs();
    let mut x = x0;
    let mut y = y0;
    let mut k1 = rhs(x, y);
    visit(x, y, k1);
    let mut h = (span * 1e-3).min(hmax).max(1e-12 * x.abs().max(1.0));
    let mut steps = 0usize;
    while (x1 - x) * dir > 0.0 {
        steps += 1;
        if steps > 5_000_000 {
            return Err(Error::NonConvergence(format!("step size collapsed near x = {x}")));
        }
        let last = h >= (x1 - x).abs();
        if last {
            h = (x1 - x).abs();
        }
        let hs = h * dir;
        let mut k = [[0.0; 2]; 7];
        k[0] = k1;
        for s in 0..6 {
            let mut yt = y;
            for (j, kj) in k.iter().enumerate().take(s + 1) {
                for c in 0..2 {
                    yt[c] += hs * A[s][j] * kj[c];
                }
            }
            if s < 5 {
                k[s + 1] = rhs(x + C[s] * hs, yt);
            } else {
                // last stage: yt is the fifth-order solution
                k[6] = rhs(x + hs, yt);
                let mut err = 0.0;
                for c in 0..2 {
                    let e: f64 = (0..7).map(|j| E[j] * k[j][c]).sum::<f64>() * hs;
                    let sc = atol + rtol * y[c].abs().max(yt[c].abs());
                    err += (e / sc).powi(2);
                }
                let err = (err / 2.0).sqrt();
                if !err.is_finite() || !yt.iter().all(|v| v.is_finite()) {
                    h *= 0.2;
                    continue;
                }
                if err <= 1.0 {
                    x = if last { x1 } else { x + hs };
                    y = yt;
                    k1 = k[6];
                    visit(x, y, k1);
                }
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = (h * factor).min(hmax);
            }
        }
        if h < 1e-14 * x.abs().max(1.0) {
            return Err(Error::NonConvergence(format!("step size collapsed near x = {x}")));
        }
    }
    Ok(y)
}

/// A diffusion on `(l, ∞)` given by drift and volatility functions.
pub struct NumericDiffusion {
    drift: Coefficient,
    vol: Coefficient,
    left: f64,
    reference: f64,
    config: OdeEigenConfig,
    /// `ln s'` and `s` on the window, anchored at the reference point.
    scale: Track,
    cache: Mutex<HashMap<u64, Arc<NumericEigen>>>,
    label: String,
}

impl std::fmt::Debug for NumericDiffusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NumericDiffusion")
            .field("label", &self.label)
            .field("left", &self.left)
            .field("reference", &self.reference)
            .field("config", &self.config)
            .finish()
    }
}

impl NumericDiffusion {
    pub fn new(
        drift: Coefficient,
        vol: Coefficient,
        left: f64,
        reference: f64,
        config: OdeEigenConfig,
        label: impl Into<String>,
    ) -> Result<Self> {
        let (lo, hi) = config.window;
        if !(config.rtol > 0.0 && config.atol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if !(config.anchor_distance > 0.0 && config.max_step_fraction > 0.0) {
            return Err(Error::InvalidParameter("anchor distance and step fraction must be positive".into()));
        }
        if !(lo < reference && reference < hi) {
            return Err(Error::InvalidParameter(format!(
                "reference point {reference} must lie strictly inside the window ({lo}, {hi})"
            )));
        }
        if lo <= left {
            return Err(Error::WindowTooWide { anchor: lo });
        }
        let hmax = (hi - lo) * config.max_step_fraction;
        let slope = |x: f64| {
            let s = vol(x);
            -2.0 * drift(x) / (s * s)
        };
        let rhs = |x: f64, y: [f64; 2]| [slope(x), y[0].exp()];
        let half = |target: f64| -> Result<Track> {
            let mut track = Track::default();
            let mut bad = None;
            dopri(rhs, reference, [0.0, 0.0], target, config.rtol, config.atol, hmax, |x, y, d| {
                if !(vol(x) > 0.0) && bad.is_none() {
                    bad = Some(x);
                }
                // v = (s, s', s''), w = (ln s', (ln s')')
                let sp = y[0].exp();
                track.push(x, [y[1], sp, sp * d[0]], [y[0], d[0]]);
            })?;
            match bad {
                Some(x) => Err(Error::NonPositiveDiffusion { x }),
                None => Ok(track.sorted()),
            }
        };
        let mut scale = half(lo)?;
        let right = half(hi)?;
        scale.x.pop();
        scale.v.pop();
        scale.w.pop();
        scale.x.extend(right.x);
        scale.v.extend(right.v);
        scale.w.extend(right.w);
        Ok(Self {
            drift,
            vol,
            left,
            reference,
            config,
            scale,
            cache: Mutex::new(HashMap::new()),
            label: label.into(),
        })
    }

    pub fn config(&self) -> &OdeEigenConfig {
        &self.config
    }

    fn constant_root(&self, q: f64, x: f64, sign: f64) -> f64 {
        let s2 = (self.vol)(x).powi(2);
        let d = (self.drift)(x) / s2;
        -d + sign * (d * d + 2.0 * q / s2).sqrt()
    }

    fn riccati(&self, q: f64) -> impl Fn(f64, [f64; 2]) -> [f64; 2] + '_ {
        move |x, y| {
            let s2 = (self.vol)(x).powi(2);
            let g = y[1];
            [g, 2.0 / s2 * (q - (self.drift)(x) * g) - g * g]
        }
    }

    fn sweep(&self, q: f64, anchor: f64, target: f64, sign: f64) -> Result<Track> {
        let (lo, hi) = self.config.window;
        let hmax = (hi - lo) * self.config.max_step_fraction;
        let rhs = self.riccati(q);
        let g0 = self.constant_root(q, anchor, sign);
        if !g0.is_finite() {
            return Err(Error::NonConvergence(format!("no far-field start at x = {anchor}")));
        }
        // Far from the window the step may grow past the window resolution.
        let mut track = Track::default();
        let inside = |x: f64| x >= lo - 1e-12 * lo.abs().max(1.0) && x <= hi + 1e-12 * hi.abs().max(1.0);
        let entry = if sign > 0.0 { lo } else { hi };
        let far_hmax = (anchor - entry).abs().max(hmax) / 16.0;
        let y = dopri(&rhs, anchor, [0.0, g0], entry, self.config.rtol, self.config.atol, far_hmax, |_, _, _| {})?;
        dopri(&rhs, entry, y, target, self.config.rtol, self.config.atol, hmax, |x, y, d| {
            if inside(x) {
                track.push(x, [y[0], y[1], d[1]], [y[1], d[1]]);
            }
        })?;
        Ok(track.sorted())
    }

    /// Solve for `φ⁺` and `φ⁻` at rate `q > 0`, normalized to one at the reference point.
    pub fn solve_eigenpair(&self, q: f64) -> Result<Arc<NumericEigen>> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::EigenfunctionUnavailable { q, reason: "rate must be positive".into() });
        }
        if let Some(e) = self.cache.lock().expect("eigen cache poisoned").get(&q.to_bits()) {
            return Ok(e.clone());
        }
        let (lo, hi) = self.config.window;
        let probes: Vec<f64> = (0..=64).map(|i| lo + (hi - lo) * i as f64 / 64.0).collect();
        let settle = |anchor_of: &dyn Fn(usize) -> f64, sign: f64, target: f64| -> Result<Track> {
            let mut prev = self.sweep(q, anchor_of(0), target, sign)?;
            for k in 1..MAX_ANCHOR_MOVES {
                let next = self.sweep(q, anchor_of(k), target, sign)?;
                let drift = probes
                    .iter()
                    .map(|&x| (next.slope(x) - prev.slope(x)).abs() / (1.0 + next.slope(x).abs()))
                    .fold(0.0, f64::max);
                prev = next;
                if drift < SETTLE {
                    return Ok(prev);
                }
            }
            Err(Error::NonConvergence(format!("{} solution did not settle as the anchor moved", if sign > 0.0 { "increasing" } else { "decreasing" })))
        };
        let d0 = self.config.anchor_distance;
        let left = self.left;
        let up_anchor = move |k: usize| {
            let far = lo - d0 * 2f64.powi(k as i32);
            if left.is_finite() {
                left + (lo - left) * 0.5f64.powi(k as i32 + 1)
            } else {
                far
            }
        };
        let up = settle(&up_anchor, 1.0, hi)?;
        let down = settle(&|k: usize| hi + d0 * 2f64.powi(k as i32), -1.0, lo)?;
        let eigen = NumericEigen {
            up_ref: up.value(self.reference),
            down_ref: down.value(self.reference),
            up,
            down,
        };
        let w: Vec<f64> = probes
            .iter()
            .map(|&x| {
                eigen.ln_up(x) + eigen.ln_down(x) + (eigen.up.slope(x) - eigen.down.slope(x)).ln()
                    - self.scale_deriv(x).ln()
            })
            .collect();
        let spread = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - w.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(spread < WRONSKIAN_DRIFT) {
            return Err(Error::NonConvergence(format!("Wronskian varies by {spread:e} across the window")));
        }
        let eigen = Arc::new(eigen);
        self.cache.lock().expect("eigen cache poisoned").insert(q.to_bits(), eigen.clone());
        Ok(eigen)
    }
}

impl DiffusionModel for NumericDiffusion {
    fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }
    fn volatility(&self, x: f64) -> f64 {
        (self.vol)(x)
    }
    fn left_boundary(&self) -> f64 {
        self.left
    }
    fn reference(&self) -> f64 {
        self.reference
    }
    fn scale(&self, x: f64) -> f64 {
        self.scale.value(x)
    }
    fn scale_deriv(&self, x: f64) -> f64 {
        self.scale.second(x).exp()
    }
    fn ln_scale_deriv(&self, x: f64) -> f64 {
        self.scale.second(x)
    }
    fn eigenpair(&self, q: f64) -> Result<Arc<dyn Eigenpair>> {
        Ok(self.solve_eigenpair(q)?)
    }
    fn name(&self) -> String {
        self.label.clone()
    }
    fn contains(&self, x: f64) -> bool {
        x.is_finite() && x > self.left
    }
}

/// Interpolated eigenfunctions; `NaN` outside the window.
pub struct NumericEigen {
    up: Track,
    down: Track,
    up_ref: f64,
    down_ref: f64,
}

impl NumericEigen {
    /// Nodes of the increasing solution inside the window.
    pub fn up_nodes(&self) -> &[f64] {
        &self.up.x
    }

    pub fn down_nodes(&self) -> &[f64] {
        &self.down.x
    }
}

impl Eigenpair for NumericEigen {
    fn ln_up(&self, x: f64) -> f64 {
        self.up.value(x) - self.up_ref
    }
    fn ln_down(&self, x: f64) -> f64 {
        self.down.value(x) - self.down_ref
    }
    fn dlog_up(&self, x: f64) -> Option<f64> {
        Some(self.up.slope(x))
    }
    fn dlog_down(&self, x: f64) -> Option<f64> {
        Some(self.down.slope(x))
    }
}
