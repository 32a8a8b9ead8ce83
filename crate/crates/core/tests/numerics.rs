use std::sync::Arc;

use drawdown_core::closedform::{bm_drawdown_lt, bm_drawdown_lt_c, Bessel3, BrownianMotion, BrownianParams};
use drawdown_core::inversion::{clamp_probability, invert, invert_euler, TransformFn, DEFAULT_ORDER};
use drawdown_core::law::Solver;
use drawdown_core::model::{DiffusionModel, QKernel};
use drawdown_core::numeigen::{NumericDiffusion, OdeEigenConfig};
use drawdown_core::quad::{integrate, ExponentAccumulator};
use drawdown_core::Error;
use num_complex::Complex64;
use proptest::prelude::*;

fn numeric_bm(mu: f64, sigma: f64, lo: f64, hi: f64) -> NumericDiffusion {
    NumericDiffusion::new(
        Arc::new(move |_| mu),
        Arc::new(move |_| sigma),
        f64::NEG_INFINITY,
        0.0,
        OdeEigenConfig::new(lo, hi),
        "numeric bm",
    )
    .unwrap()
}

fn numeric_bes3(lo: f64, hi: f64) -> NumericDiffusion {
    NumericDiffusion::new(Arc::new(|x| 1.0 / x), Arc::new(|_| 1.0), 0.0, 1.0, OdeEigenConfig::new(lo, hi), "numeric bes3")
        .unwrap()
}

fn compare_eigenfunctions(numeric: &dyn DiffusionModel, exact: &dyn DiffusionModel, lo: f64, hi: f64) {
    for q in [0.05, 0.5, 2.0, 8.0] {
        let n = QKernel::new(numeric, q).unwrap();
        let e = QKernel::new(exact, q).unwrap();
        let grid: Vec<f64> = (0..=120).map(|i| lo + (hi - lo) * i as f64 / 120.0).collect();
        for &x in &grid {
            let up = (n.ln_phi_up(x) - e.ln_phi_up(x)).exp_m1().abs();
            let down = (n.ln_phi_down(x) - e.ln_phi_down(x)).exp_m1().abs();
            assert!(up < 1e-6 && down < 1e-6, "{} q={q} x={x}: {up:e} {down:e}", numeric.name());
            let w = (n.ln_wronskian_at(x) - n.ln_wronskian_at(numeric.reference())).exp_m1().abs();
            assert!(w < 1e-6, "{} q={q} x={x}: wronskian {w:e}", numeric.name());
        }
        for pair in grid.windows(2) {
            assert!(n.ln_phi_up(pair[1]) > n.ln_phi_up(pair[0]));
            assert!(n.ln_phi_down(pair[1]) < n.ln_phi_down(pair[0]));
        }
    }
}

#[test]
fn numeric_eigenfunctions_match_brownian_closed_form() {
    for mu in [-0.5, 0.0, 0.8] {
        let numeric = numeric_bm(mu, 1.2, -3.0, 3.0);
        let exact = BrownianMotion::new(mu, 1.2).unwrap();
        compare_eigenfunctions(&numeric, &exact, -3.0, 3.0);
    }
}

#[test]
fn numeric_eigenfunctions_match_bessel_closed_form() {
    compare_eigenfunctions(&numeric_bes3(0.2, 5.0), &Bessel3, 0.2, 5.0);
}

#[test]
fn exit_transform_through_numeric_provider() {
    for mu in [-0.5, 0.0, 0.8] {
        let numeric = numeric_bm(mu, 1.0, -3.0, 3.0);
        let exact = BrownianMotion::new(mu, 1.0).unwrap();
        let (n, e) = (Solver::new(&numeric), Solver::new(&exact));
        for q in [0.1, 0.5, 2.0] {
            for (x, y, z) in [(0.5, 1.0, 0.0), (0.5, 0.0, 1.0), (-1.0, -2.5, 2.0), (1.0, 2.5, -2.0)] {
                let got = n.exit_transform(q, x, y, z).unwrap().value;
                let want = e.exit_transform(q, x, y, z).unwrap().value;
                assert!((got - want).abs() < 1e-5, "mu={mu} q={q} ({x},{y},{z}): {got} vs {want}");
            }
        }
    }
    let (n, e) = (numeric_bes3(0.2, 5.0), Bessel3);
    for q in [0.1, 0.5, 2.0] {
        let got = Solver::new(&n).exit_transform(q, 2.0, 1.0, 4.0).unwrap().value;
        let want = Solver::new(&e).exit_transform(q, 2.0, 1.0, 4.0).unwrap().value;
        assert!((got - want).abs() < 1e-5, "bes3 q={q}: {got} vs {want}");
    }
}

#[test]
fn textbook_pairs_invert() {
    let one = TransformFn::new(|q| Ok(1.0 / q)).with_complex(|q| 1.0 / q);
    let decay = TransformFn::new(|q| Ok(1.0 / (q + 1.0))).with_complex(|q| 1.0 / (q + 1.0));
    let ramp = TransformFn::new(|q| Ok(1.0 / (q * q))).with_complex(|q| 1.0 / (q * q));
    for t in [0.25, 0.5, 1.0] {
        for inv in [invert(&one, t, DEFAULT_ORDER).unwrap(), invert_euler(&one, t).unwrap()] {
            assert!((inv.value - 1.0).abs() < 1e-6, "{inv:?}");
        }
        for inv in [invert(&decay, t, DEFAULT_ORDER).unwrap(), invert_euler(&decay, t).unwrap()] {
            assert!((inv.value - (-t).exp()).abs() < 1e-6, "{inv:?}");
        }
        for inv in [invert(&ramp, t, DEFAULT_ORDER).unwrap(), invert_euler(&ramp, t).unwrap()] {
            assert!((inv.value - t).abs() < 1e-6, "{inv:?}");
        }
    }
    // later times: Gaver-Stehfest loses digits on the decaying pair, but its diagnostic says so
    for t in [3.0, 6.0] {
        let gs = invert(&decay, t, DEFAULT_ORDER).unwrap();
        assert!((gs.value - (-t).exp()).abs() <= gs.diagnostic, "{gs:?}");
        let eu = invert_euler(&decay, t).unwrap();
        assert!((eu.value - (-t).exp()).abs() < 1e-6, "{eu:?}");
    }
}

#[test]
fn inversion_algorithms_agree_on_drawdown_law() {
    for mu in [-0.5, 0.0, 0.5] {
        let p = BrownianParams::new(mu, 1.0).unwrap();
        let f = TransformFn::new(move |q| Ok(bm_drawdown_lt(p, q, 1.0)? / q))
            .with_complex(move |q: Complex64| bm_drawdown_lt_c(p, q, 1.0) / q)
            .probability();
        for t in [0.5, 1.0, 2.0, 4.0] {
            let gs = invert(&f, t, DEFAULT_ORDER).unwrap();
            let eu = invert_euler(&f, t).unwrap();
            let allowed = f64::max(1e-5, 10.0 * (gs.diagnostic + eu.diagnostic));
            assert!((gs.value - eu.value).abs() < allowed, "mu={mu} t={t}: {gs:?} {eu:?}");
            assert!((0.0..=1.0).contains(&gs.value));
        }
    }
}

#[test]
fn probability_excursions() {
    assert_eq!(clamp_probability(1.0 + 5e-5, 0.0).unwrap(), 1.0);
    assert_eq!(clamp_probability(-5e-5, 0.0).unwrap(), 0.0);
    assert!(matches!(clamp_probability(1.0 + 2e-4, 0.0), Err(Error::DivergentAcceleration { .. })));
    assert!(matches!(clamp_probability(-0.01, 1e-4), Err(Error::DivergentAcceleration { .. })));
}

#[test]
fn halving_tolerance_stays_within_reported_error() {
    let bm = BrownianMotion::new(0.3, 1.0).unwrap();
    let bes = Bessel3;
    type Law = fn(&Solver<'_>) -> drawdown_core::Result<drawdown_core::law::LawResult>;
    let laws: [(&dyn DiffusionModel, Law); 6] = [
        (&bm, |s| s.dd_before_du(0.5, 0.0, 1.0, 2.0)),
        (&bm, |s| s.drawdown_transform(0.5, 0.0, 1.0)),
        (&bm, |s| s.occ_dd_above_until_dd(0.5, 0.0, 0.3, 1.0)),
        (&bm, |s| s.occ_du_below_until_dd(0.5, 0.0, 1.0, 0.8)),
        (&bm, |s| s.occ_dd_above_at_exp(1.5, 0.5, 0.0, 0.4)),
        (&bes, |s| s.dd_before_du(0.5, 3.0, 1.0, 0.7)),
    ];
    for (model, law) in laws {
        for tol in [1e-6, 1e-8, 1e-10] {
            let coarse = law(&Solver::new(model).with_tol(tol)).unwrap();
            let fine = law(&Solver::new(model).with_tol(tol / 2.0)).unwrap();
            let slack = coarse.error + 4.0 * f64::EPSILON * coarse.value.abs();
            assert!((coarse.value - fine.value).abs() <= slack, "{} tol={tol}: {coarse:?} {fine:?}", model.name());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn accumulator_is_a_cache_of_plain_integrals(q in 0.05..5.0f64, i in 0usize..40, j in 0usize..40, frac in 0.0..1.0f64) {
        let bm = BrownianMotion::new(0.3, 1.0).unwrap();
        let k = QKernel::new(&bm, q).unwrap();
        let a = 1.0;
        let tol = 1e-9;
        let h = |u: f64| k.ratio(u, u - a);
        let mut acc = ExponentAccumulator::new(0.0, a / 4.0, h, tol);
        acc.extend_to(12.0).unwrap();
        let (ui, uj) = (i as f64 * 0.25, j as f64 * 0.25 + frac * 0.25);
        let cached = acc.between(ui, uj).unwrap();
        let direct = integrate(h, ui, uj, tol).unwrap().value;
        prop_assert!((cached - direct).abs() <= 2.0 * tol * (1.0 + direct.abs()), "{cached} vs {direct}");
    }
}
