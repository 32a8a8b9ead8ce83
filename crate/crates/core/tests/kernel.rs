use std::sync::Arc;

use drawdown_core::closedform::{Bessel3, BrownianMotion};
use drawdown_core::law::Solver;
use drawdown_core::model::{DiffusionModel, Eigenpair, QKernel};
use drawdown_core::Result;
use proptest::prelude::*;

fn models() -> Vec<(Box<dyn DiffusionModel>, (f64, f64))> {
    let mut out: Vec<(Box<dyn DiffusionModel>, (f64, f64))> = Vec::new();
    for mu in [-1.0, 0.0, 1.0] {
        out.push((Box::new(BrownianMotion::new(mu, 1.0).unwrap()), (-3.0, 3.0)));
    }
    out.push((Box::new(Bessel3), (0.1, 5.0)));
    out
}

fn lerp((lo, hi): (f64, f64), u: f64) -> f64 {
    lo + (hi - lo) * u
}

/// Fourth-order central difference.
fn derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn antisymmetry(u in 0.0..1.0f64, v in 0.0..1.0f64, q in 1e-3..5.0f64) {
        for (model, window) in models() {
            let k = QKernel::new(model.as_ref(), q).unwrap();
            let (x, y) = (lerp(window, u), lerp(window, v));
            let w = k.w(x, y);
            prop_assert!((w + k.w(y, x)).abs() < 1e-12 * (1.0 + w.abs()), "{} {x} {y} {q}", model.name());
            if x > y {
                prop_assert!(w > 0.0);
            }
        }
    }

    #[test]
    fn derivative_identity(
        u in 0.0..1.0f64,
        d1 in 0.15..0.45f64,
        d2 in 0.15..0.45f64,
        order in 0usize..6,
        q in 1e-2..5.0f64,
    ) {
        for (model, window) in models() {
            let k = QKernel::new(model.as_ref(), q).unwrap();
            // keep the span within a few decay lengths so the difference quotient stays conditioned
            let mid = lerp(window, 0.5);
            let rate = k.dlog_up(mid).abs().max(k.dlog_down(mid).abs());
            let span = (window.1 - window.0).min(4.0 / rate);
            let start = lerp((window.0, window.1 - span), u);
            let pts = [start, start + d1 * span, start + (d1 + d2) * span];
            let [i, j, l] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]][order];
            let (x, y, z) = (pts[i], pts[j], pts[l]);
            let h = 1e-3 * span;
            let fd = derivative(|t| k.w_ratio(t, y, t, z), x, h);
            let sign = (y - z).signum();
            let exact = model.scale_deriv(x) * sign * (k.ln_abs_w(y, z) - 2.0 * k.ln_abs_w(x, z)).exp();
            prop_assert!((fd - exact).abs() < 1e-6 * exact.abs(), "{} ({x},{y},{z}) fd {fd} exact {exact}", model.name());
        }
    }

    #[test]
    fn zero_rate_limits(u in 0.0..1.0f64, v in 0.0..1.0f64) {
        for (model, window) in models() {
            let (x, y) = (lerp(window, u), lerp(window, v));
            prop_assume!((x - y).abs() > 1e-3);
            let k0 = QKernel::new(model.as_ref(), 0.0).unwrap();
            prop_assert_eq!(k0.w(x, y), model.scale_diff(x, y));
            prop_assert_eq!(k0.w1(x, y), model.scale_deriv(x));
            let mut last = (f64::INFINITY, f64::INFINITY);
            for q in [1e-2, 1e-4, 1e-6] {
                let k = QKernel::new(model.as_ref(), q).unwrap();
                let err = ((k.w(x, y) - k0.w(x, y)).abs(), (k.w1(x, y) - model.scale_deriv(x)).abs());
                prop_assert!(err.0 < last.0 && err.1 < last.1, "{} q={q} {:?} {:?}", model.name(), err, last);
                last = err;
            }
            prop_assert!(last.0 < 1e-4 * (1.0 + k0.w(x, y).abs()));
        }
    }

    #[test]
    fn wronskian_is_constant(u in 0.0..1.0f64, q in 1e-3..5.0f64) {
        for (model, window) in models() {
            let k = QKernel::new(model.as_ref(), q).unwrap();
            let x = lerp(window, u);
            let up = k.dlog_up(x) * k.phi_up(x);
            let down = k.dlog_down(x) * k.phi_down(x);
            let lhs = up * k.phi_down(x) - down * k.phi_up(x);
            let rhs = k.wronskian() * model.scale_deriv(x);
            prop_assert!((lhs / rhs - 1.0).abs() < 1e-8, "{} x={x} q={q}", model.name());
        }
    }

    #[test]
    fn coincident_arguments(u in 0.0..1.0f64, q in 0.0..5.0f64) {
        for (model, window) in models() {
            let k = QKernel::new(model.as_ref(), q).unwrap();
            let y = lerp(window, u);
            prop_assert_eq!(k.w(y, y), 0.0);
            prop_assert_eq!(k.w1(y, y), model.scale_deriv(y));
        }
    }
}

#[test]
fn eigenfunctions_are_monotone_and_normalized() {
    for (model, window) in models() {
        for q in [1e-3, 0.1, 1.0, 10.0] {
            let k = QKernel::new(model.as_ref(), q).unwrap();
            let r = model.reference();
            assert!(k.ln_phi_up(r).abs() < 1e-14 && k.ln_phi_down(r).abs() < 1e-14);
            let grid: Vec<f64> = (0..=200).map(|i| lerp(window, i as f64 / 200.0)).collect();
            for w in grid.windows(2) {
                assert!(k.ln_phi_up(w[1]) > k.ln_phi_up(w[0]), "{} q={q}", model.name());
                assert!(k.ln_phi_down(w[1]) < k.ln_phi_down(w[0]), "{} q={q}", model.name());
            }
        }
    }
}

#[test]
fn decreasing_solution_grows_toward_left_boundary() {
    let bes = Bessel3;
    let k = QKernel::new(&bes, 0.5).unwrap();
    let mut last = k.ln_phi_down(1.0);
    for i in 1..=60 {
        let x = 0.7f64.powi(i);
        let v = k.ln_phi_down(x);
        assert!(v > last, "x={x}");
        last = v;
    }
    assert!(last > 20.0);
    for mu in [-1.0, 0.0, 1.0] {
        let bm = BrownianMotion::new(mu, 1.0).unwrap();
        let k = QKernel::new(&bm, 0.5).unwrap();
        let mut last = k.ln_phi_down(0.0);
        for i in 1..=200 {
            let v = k.ln_phi_down(-0.5 * i as f64);
            assert!(v > last);
            last = v;
        }
    }
}

#[test]
fn standard_bm_kernel_values() {
    let bm = BrownianMotion::new(0.0, 1.0).unwrap();
    let k = QKernel::new(&bm, 0.5).unwrap();
    assert!((k.w(1.0, 0.0) - 2.0 * 1f64.sinh()).abs() < 1e-14);
    assert!((k.ratio(1.0, 0.0) - 1.0 / 1f64.tanh()).abs() < 1e-14);
    assert!((k.w(2.5, 1.5) - k.w(1.0, 0.0)).abs() < 1e-13);
}

/// Wraps a model and rescales its eigenfunctions by fixed constants.
struct Rescaled<M> {
    inner: M,
    up: f64,
    down: f64,
}

struct RescaledPair {
    inner: Arc<dyn Eigenpair>,
    up: f64,
    down: f64,
}

impl Eigenpair for RescaledPair {
    fn ln_up(&self, x: f64) -> f64 {
        self.inner.ln_up(x) + self.up
    }
    fn ln_down(&self, x: f64) -> f64 {
        self.inner.ln_down(x) + self.down
    }
    fn dlog_up(&self, x: f64) -> Option<f64> {
        self.inner.dlog_up(x)
    }
    fn dlog_down(&self, x: f64) -> Option<f64> {
        self.inner.dlog_down(x)
    }
}

impl<M: DiffusionModel> DiffusionModel for Rescaled<M> {
    fn drift(&self, x: f64) -> f64 {
        self.inner.drift(x)
    }
    fn volatility(&self, x: f64) -> f64 {
        self.inner.volatility(x)
    }
    fn left_boundary(&self) -> f64 {
        self.inner.left_boundary()
    }
    fn reference(&self) -> f64 {
        self.inner.reference()
    }
    fn scale(&self, x: f64) -> f64 {
        self.inner.scale(x)
    }
    fn scale_deriv(&self, x: f64) -> f64 {
        self.inner.scale_deriv(x)
    }
    fn scale_diff(&self, x: f64, y: f64) -> f64 {
        self.inner.scale_diff(x, y)
    }
    fn eigenpair(&self, q: f64) -> Result<Arc<dyn Eigenpair>> {
        Ok(Arc::new(RescaledPair { inner: self.inner.eigenpair(q)?, up: self.up, down: self.down }))
    }
    fn name(&self) -> String {
        format!("rescaled {}", self.inner.name())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn laws_ignore_eigenfunction_normalization(up in -3.0..3.0f64, down in -3.0..3.0f64, q in 0.1..3.0f64) {
        let bm = BrownianMotion::new(0.4, 1.0).unwrap();
        let scaled = Rescaled { inner: bm, up, down };
        let (plain, other) = (Solver::new(&bm), Solver::new(&scaled));
        let pairs = [
            (plain.drawdown_transform(q, 0.0, 1.0).unwrap().value, other.drawdown_transform(q, 0.0, 1.0).unwrap().value),
            (plain.dd_before_du(q, 0.0, 1.2, 0.8).unwrap().value, other.dd_before_du(q, 0.0, 1.2, 0.8).unwrap().value),
            (plain.occ_dd_above_until_dd(q, 0.0, 0.3, 1.0).unwrap().value, other.occ_dd_above_until_dd(q, 0.0, 0.3, 1.0).unwrap().value),
        ];
        for (a, b) in pairs {
            prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }

        let bes = Rescaled { inner: Bessel3, up, down };
        let a = Solver::new(&Bessel3).drawdown_transform(q, 2.0, 1.0).unwrap().value;
        let b = Solver::new(&bes).drawdown_transform(q, 2.0, 1.0).unwrap().value;
        prop_assert!((a - b).abs() < 1e-10);
    }
}
