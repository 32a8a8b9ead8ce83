//! End-to-end acceptance run: every criterion at its stated tolerance, one PASS/FAIL line each.

use std::sync::Arc;
use std::time::Instant;

use clap::Parser;
use drawdown_core::closedform::{
    bes3_drawdown_lt, bm_drawdown_lt, bm_drawup_lt, bm_prob_dd_before_du, Bessel3, BrownianMotion, BrownianParams,
};
use drawdown_core::inversion::{invert, TransformFn, DEFAULT_ORDER};
use drawdown_core::law::Solver;
use drawdown_core::model::{DiffusionModel, QKernel};
use drawdown_core::numeigen::{NumericDiffusion, OdeEigenConfig};
use drawdown_core::passage::Route;
use drawdown_core::pricing::{Payoff, PricingSpec};
use drawdown_lab::args::{Cli, Format};
use drawdown_lab::{execute, render, Report};
use drawdown_mc::{estimate, estimate_many, Functional, SimConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

type Verdict = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_close(got: f64, want: f64, rel: f64) -> bool {
    (got - want).abs() <= rel * want.abs()
}

fn bm(mu: f64) -> BrownianMotion {
    BrownianMotion::new(mu, 1.0).unwrap()
}

fn kernel_models() -> Vec<(Box<dyn DiffusionModel>, (f64, f64))> {
    let mut out: Vec<(Box<dyn DiffusionModel>, (f64, f64))> = Vec::new();
    for mu in [-1.0, 0.0, 1.0] {
        out.push((Box::new(bm(mu)), (-3.0, 3.0)));
    }
    out.push((Box::new(Bessel3), (0.1, 5.0)));
    out
}

fn lerp((lo, hi): (f64, f64), u: f64) -> f64 {
    lo + (hi - lo) * u
}

fn run_cli(args: &[&str]) -> Report {
    let mut full = vec!["drawdown-lab"];
    full.extend_from_slice(args);
    let cli = Cli::try_parse_from(full).unwrap();
    execute(&cli).unwrap().report
}

fn property<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> std::result::Result<(), TestCaseError>) -> std::result::Result<(), String> {
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn kernel_laws() -> Verdict {
    let start = Instant::now();
    let models = kernel_models();
    property("antisymmetry", (0.0..1.0f64, 0.0..1.0f64, 1e-3..5.0f64), |(u, v, q)| {
        for (model, window) in &models {
            let k = QKernel::new(model.as_ref(), q).unwrap();
            let (x, y) = (lerp(*window, u), lerp(*window, v));
            let w = k.w(x, y);
            prop_assert!((w + k.w(y, x)).abs() < 1e-12 * (1.0 + w.abs()));
            prop_assert!(!(x > y) || w > 0.0);
        }
        Ok(())
    })?;
    property("derivative identity", (0.0..1.0f64, 0.15..0.45f64, 0.15..0.45f64, 1e-2..5.0f64), |(u, d1, d2, q)| {
        for (model, window) in &models {
            let k = QKernel::new(model.as_ref(), q).unwrap();
            let mid = lerp(*window, 0.5);
            let rate = k.dlog_up(mid).abs().max(k.dlog_down(mid).abs());
            let span = (window.1 - window.0).min(4.0 / rate);
            let x = lerp((window.0, window.1 - span), u);
            let (y, z) = (x + d1 * span, x + (d1 + d2) * span);
            let h = 1e-3 * span;
            let f = |t: f64| k.w_ratio(t, y, t, z);
            let fd = (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h);
            let exact = model.scale_deriv(x) * (y - z).signum() * (k.ln_abs_w(y, z) - 2.0 * k.ln_abs_w(x, z)).exp();
            prop_assert!((fd - exact).abs() < 1e-6 * exact.abs(), "{} ({x},{y},{z})", model.name());
        }
        Ok(())
    })?;
    property("zero-rate limits", (0.0..1.0f64, 0.0..1.0f64), |(u, v)| {
        for (model, window) in &models {
            let (x, y) = (lerp(*window, u), lerp(*window, v));
            if (x - y).abs() <= 1e-3 {
                continue;
            }
            let k0 = QKernel::new(model.as_ref(), 0.0).unwrap();
            prop_assert_eq!(k0.w(x, y), model.scale_diff(x, y));
            let mut last = f64::INFINITY;
            for q in [1e-2, 1e-4, 1e-6] {
                let err = (QKernel::new(model.as_ref(), q).unwrap().w(x, y) - k0.w(x, y)).abs();
                prop_assert!(err < last);
                last = err;
            }
            prop_assert!(last < 1e-4 * (1.0 + k0.w(x, y).abs()));
        }
        Ok(())
    })?;
    property("wronskian", (0.0..1.0f64, 1e-3..5.0f64), |(u, q)| {
        for (model, window) in &models {
            let k = QKernel::new(model.as_ref(), q).unwrap();
            let x = lerp(*window, u);
            let lhs = k.dlog_up(x) * k.phi_up(x) * k.phi_down(x) - k.dlog_down(x) * k.phi_down(x) * k.phi_up(x);
            prop_assert!((lhs / (k.wronskian() * model.scale_deriv(x)) - 1.0).abs() < 1e-8);
        }
        Ok(())
    })?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1} s"))?;
    Ok(format!("4 properties x 1000 cases in {secs:.2} s"))
}

fn closed_form_grids() -> Verdict {
    let start = Instant::now();
    let rates = [0.05, 0.3, 1.0, 3.0, 10.0];
    let levels = [0.25, 0.5, 1.0, 1.5, 2.5];
    let mut checked = 0;
    let model = bm(0.3);
    let s = Solver::new(&model);
    for q in rates {
        for a in levels {
            for b in levels {
                let want = bm_prob_dd_before_du(model.params, q, a, b).unwrap();
                let dd = s.dd_before_du(q, 0.0, a, b).unwrap().value;
                let du = s.du_before_dd(q, 0.0, a, b).unwrap().value;
                ensure(rel_close(dd, want.drawdown_first, 1e-6), || format!("ordering q={q} a={a} b={b}: {dd}"))?;
                ensure(rel_close(du, want.drawup_first, 1e-6), || format!("ordering q={q} a={a} b={b}: {du}"))?;
                checked += 2;
            }
            let got = s.drawdown_transform(q, 0.0, a).unwrap().value;
            ensure(rel_close(got, bm_drawdown_lt(model.params, q, a).unwrap(), 1e-6), || format!("drawdown q={q} a={a}"))?;
            let got = s.drawup_transform(q, 0.0, a).unwrap().value;
            ensure(rel_close(got, bm_drawup_lt(model.params, q, a).unwrap(), 1e-6), || format!("drawup q={q} b={a}"))?;
            for f in [0.05, 0.25, 0.5, 0.75, 0.95] {
                let got = s.occ_dd_above_until_dd(q, 0.0, f * a, a).unwrap().value;
                let want = bm_drawdown_lt(model.params, q, a - f * a).unwrap();
                ensure(rel_close(got, want, 1e-6), || format!("corridor q={q} a={a} y={}", f * a))?;
            }
            checked += 7;
        }
    }
    let d = model.params.delta();
    for a in levels {
        for rise in [0.0, 0.1, 0.5, 1.0, 3.0] {
            let want = (-2.0 * d / (2.0 * d * a).exp_m1() * rise).exp();
            let got = s.max_at_drawdown_survival(0.2, 0.2 + rise, a).unwrap().value;
            ensure(rel_close(got, want, 1e-6), || format!("max at drawdown a={a} rise={rise}: {got} vs {want}"))?;
            checked += 1;
        }
    }
    let s = Solver::new(&Bessel3);
    for x in [1.0, 1.5, 2.0, 3.0, 5.0] {
        for q in rates {
            for frac in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let a = frac * x;
                let got = s.drawdown_transform(q, x, a).unwrap().value;
                let want = bes3_drawdown_lt(x, q, a).unwrap();
                ensure(rel_close(got, want, 1e-6), || format!("bes3 x={x} q={q} a={a}: {got} vs {want}"))?;
                checked += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{checked} comparisons at rel 1e-6 in {secs:.2} s"))
}

fn identity_in_law() -> Verdict {
    let start = Instant::now();
    let report = run_cli(&[
        "verify", "identity-in-law", "--q", "0.1,0.5,1,2,5", "--y", "0.5", "--a", "1", "--ks", "--paths", "100000",
        "--dt", "1e-3", "--bridge", "--seed", "3",
    ]);
    let failed: Vec<_> = report.rows.iter().filter(|r| r.pass != Some(true)).collect();
    ensure(failed.is_empty(), || format!("{} rows failed: {failed:?}", failed.len()))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 300.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{} rows (transforms and KS) in {secs:.1} s", report.rows.len()))
}

fn occupation_vs_mc() -> Verdict {
    let start = Instant::now();
    let model = bm(0.0);
    let s = Solver::new(&model);
    let x = 0.5;
    let laws = [
        (Functional::OccExitUp { q: 0.5, p: 0.25, y: 0.4, a: 0.0, b: 1.0 }, s.occ_exit_up(0.5, 0.25, x, 0.4, 0.0, 1.0)),
        (Functional::OccExitDown { q: 0.5, y: 0.6, a: 0.0, b: 1.0 }, s.occ_exit_down(0.5, x, 0.6, 0.0, 1.0)),
        (Functional::OccBelowUntilUp { q: 0.5, p: 1.5, y: 0.2, b: 1.0 }, s.occ_below_until_up(0.5, 1.5, x, 0.2, 1.0)),
        (Functional::OccBelowStartUntilDd { q: 0.5, a: 0.8 }, s.occ_below_start_until_dd(0.5, x, 0.8)),
        (Functional::OccDuBelowUntilDd { q: 0.5, y: 1.0, a: 0.8 }, s.occ_du_below_until_dd(0.5, x, 1.0, 0.8)),
        (Functional::OccDdAboveAtExp { q: 1.5, p: 0.5, y: 0.4 }, s.occ_dd_above_at_exp(1.5, 0.5, x, 0.4)),
    ];
    let functionals: Vec<_> = laws.iter().map(|l| l.0).collect();
    let cfg = SimConfig::new(1e-4, 1_000_000, 4).with_bridge(true).with_richardson(100_000);
    let estimates = estimate_many(&model, x, &functionals, &cfg).map_err(|e| e.to_string())?;
    let mut worst = (0.0f64, 0.0f64);
    for ((f, analytic), est) in laws.iter().zip(&estimates) {
        let value = analytic.as_ref().map_err(|e| format!("{}: {e}", f.name()))?.value;
        let z = (value - est.estimate).abs() / est.se;
        let r = est.richardson.ok_or("missing step-halving diagnostic")?;
        let shift = r.shift.abs() / r.shift_se;
        ensure(z <= 3.0, || format!("{}: {value} vs {} ± {} ({z:.2} SE)", f.name(), est.estimate, est.se))?;
        ensure(shift < 2.0, || format!("{}: step-halving shift {:.2} SE", f.name(), shift))?;
        worst = (worst.0.max(z), worst.1.max(shift));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 900.0, || format!("took {secs:.1} s"))?;
    Ok(format!("6 laws, worst {:.2} SE, worst shift {:.2} SE, {secs:.0} s", worst.0, worst.1))
}

fn ordering_partition() -> Verdict {
    let mut rows = 0;
    for (a, b, q) in [
        (0.5, 0.5, 0.5),
        (1.0, 1.0, 0.5),
        (1.0, 0.5, 1.0),
        (0.5, 1.0, 1.0),
        (1.5, 1.0, 0.2),
        (1.0, 1.5, 0.2),
        (2.0, 1.0, 2.0),
        (0.8, 2.0, 0.1),
        (0.3, 0.7, 5.0),
        (1.2, 1.2, 1.5),
    ] {
        let (a, b, q) = (a.to_string(), b.to_string(), q.to_string());
        let report = run_cli(&[
            "verify", "partition", "--mu", "0.3", "--q", &q, "--a", &a, "--b", &b, "--paths", "100000", "--dt", "1e-3",
            "--bridge", "--seed", "5",
        ]);
        let bad: Vec<_> = report.rows.iter().filter(|r| r.pass != Some(true)).collect();
        ensure(bad.is_empty(), || format!("a={a} b={b} q={q}: {bad:?}"))?;
        rows += report.rows.len();
    }
    Ok(format!("10 (a, b, q) combinations, {rows} rows within 3 SE"))
}

fn branch_continuity() -> Verdict {
    let models: [(Box<dyn DiffusionModel>, f64); 2] = [(Box::new(bm(0.3)), 0.0), (Box::new(Bessel3), 3.0)];
    let mut worst = 0.0f64;
    for (model, x) in &models {
        let s = Solver::new(model.as_ref());
        for q in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let direct = s.dd_before_du_via(Route::Direct, q, *x, 1.0, 1.0).unwrap().value;
            let complement = s.dd_before_du_via(Route::Complement, q, *x, 1.0, 1.0).unwrap().value;
            let gap = (direct - complement).abs();
            ensure(gap < 1e-7, || format!("{} q={q}: {direct} vs {complement}", model.name()))?;
            worst = worst.max(gap);
        }
    }
    Ok(format!("BM and BES(3), 5 rates each, largest gap {worst:.1e}"))
}

fn driftless_symmetry() -> Verdict {
    let mut worst = 0.0f64;
    for sigma in [1.0, 2.0] {
        let model = BrownianMotion::new(0.0, sigma).unwrap();
        let s = Solver::new(&model);
        for q in [0.01f64, 0.5, 2.0] {
            for a in [0.5, 1.0, 3.0] {
                let want = 1.0 / (((2.0 * q).sqrt() * a / sigma).cosh() + 1.0);
                let got = s.dd_before_du(q, 0.0, a, a).unwrap().value;
                ensure((got - want).abs() < 1e-10, || format!("sigma={sigma} q={q} a={a}: {got} vs {want}"))?;
                worst = worst.max((got - want).abs());
            }
        }
    }
    let model = bm(0.0);
    let s = Solver::new(&model);
    let mut last = f64::INFINITY;
    for q in [1e-2, 1e-4, 1e-6] {
        let gap = (s.dd_before_du(q, 0.0, 1.0, 1.0).unwrap().value - 0.5).abs();
        ensure(gap < last, || format!("no approach to 1/2 at q={q}"))?;
        last = gap;
    }
    ensure(last < 1e-5, || format!("gap to 1/2 is {last}"))?;
    Ok(format!("largest error {worst:.1e}, gap to 1/2 at q=1e-6 {last:.1e}"))
}

fn inversion_layer() -> Verdict {
    let one = TransformFn::new(|q| Ok(1.0 / q));
    let decay = TransformFn::new(|q| Ok(1.0 / (q + 1.0)));
    for t in [0.25, 0.5, 1.0] {
        let v = invert(&one, t, DEFAULT_ORDER).map_err(|e| e.to_string())?.value;
        ensure((v - 1.0).abs() < 1e-6, || format!("1/q at t={t}: {v}"))?;
        let v = invert(&decay, t, DEFAULT_ORDER).map_err(|e| e.to_string())?.value;
        ensure((v - (-t).exp()).abs() < 1e-6, || format!("1/(q+1) at t={t}: {v}"))?;
    }
    let p = BrownianParams::standard();
    let cdf = TransformFn::new(move |q| Ok(bm_drawdown_lt(p, q, 1.0)? / q)).probability();
    let inv = invert(&cdf, 1.0, DEFAULT_ORDER).map_err(|e| e.to_string())?;
    let cfg = SimConfig::new(1e-3, 100_000, 8).with_bridge(true).with_richardson(0);
    let est = estimate(&bm(0.0), 0.0, Functional::DrawdownCdf { a: 1.0, t: 1.0 }, &cfg).map_err(|e| e.to_string())?;
    let z = (inv.value - est.estimate).abs() / est.se;
    ensure(z <= 3.0, || format!("P(drawdown time <= 1): {} vs {} ± {}", inv.value, est.estimate, est.se))?;
    Ok(format!("pairs to 1e-6; P(drawdown time <= 1) = {:.5}, MC {:.5} ± {:.5}", inv.value, est.estimate, est.se))
}

fn pricing() -> Verdict {
    let model = bm(0.0);
    let s = Solver::new(&model);
    let spec = PricingSpec { barrier: 0.3, strike: 0.2, maturity: 1.0, rate: 0.0, alpha: 1.0 };
    let cfg = SimConfig::new(1e-3, 100_000, 9).with_bridge(true).with_richardson(0);
    let price = s.parisian_digital_price(0.0, &spec).map_err(|e| e.to_string())?.value;
    let est = estimate(&model, 0.0, Functional::ParisianExceed { y: 0.3, k: 0.2, t: 1.0 }, &cfg).map_err(|e| e.to_string())?;
    ensure((price - est.estimate).abs() <= f64::max(3.0 * est.se, 0.02), || {
        format!("parisian {price} vs {} ± {}", est.estimate, est.se)
    })?;
    let late = s.parisian_digital_price(0.0, &PricingSpec { strike: 0.995, ..spec }).map_err(|e| e.to_string())?.value;
    ensure(late <= 0.05, || format!("K near T: {late}"))?;
    let low = PricingSpec { barrier: 1e-3, rate: 0.05, ..spec };
    let shallow = s.parisian_digital_price(0.0, &low).map_err(|e| e.to_string())?.value;
    ensure((shallow - (-0.05f64).exp()).abs() < 0.02, || format!("small barrier: {shallow}"))?;
    let capped = PricingSpec { alpha: 0.5, ..spec };
    let quantile = s.alpha_quantile_price(0.0, &capped, &Payoff::capped_linear(1.0)).map_err(|e| e.to_string())?.value;
    let q_est = estimate(&model, 0.0, Functional::QuantilePayoff { alpha: 0.5, t: 1.0, cap: Some(1.0) }, &cfg)
        .map_err(|e| e.to_string())?;
    ensure((quantile - q_est.estimate).abs() <= f64::max(3.0 * q_est.se, 0.02), || {
        format!("quantile {quantile} vs {} ± {}", q_est.estimate, q_est.se)
    })?;
    Ok(format!(
        "parisian {price:.5} vs MC {:.5} ± {:.5}; quantile {quantile:.5} vs MC {:.5} ± {:.5}; K near T {late:.1e}; small barrier {shallow:.5}",
        est.estimate, est.se, q_est.estimate, q_est.se
    ))
}

fn numeric_eigenfunctions() -> Verdict {
    let numeric_bm = |mu: f64| {
        NumericDiffusion::new(
            Arc::new(move |_| mu),
            Arc::new(|_| 1.2),
            f64::NEG_INFINITY,
            0.0,
            OdeEigenConfig::new(-3.0, 3.0),
            "numeric bm",
        )
        .unwrap()
    };
    let numeric_bes3 =
        NumericDiffusion::new(Arc::new(|x| 1.0 / x), Arc::new(|_| 1.0), 0.0, 1.0, OdeEigenConfig::new(0.2, 5.0), "numeric bes3")
            .unwrap();
    let mut pairs: Vec<(Box<dyn DiffusionModel>, Box<dyn DiffusionModel>, (f64, f64))> = Vec::new();
    for mu in [-0.5, 0.0, 0.8] {
        pairs.push((Box::new(numeric_bm(mu)), Box::new(BrownianMotion::new(mu, 1.2).unwrap()), (-3.0, 3.0)));
    }
    pairs.push((Box::new(numeric_bes3), Box::new(Bessel3), (0.2, 5.0)));
    let mut worst = 0.0f64;
    for (numeric, exact, window) in &pairs {
        for q in [0.05, 0.5, 2.0, 8.0] {
            let n = QKernel::new(numeric.as_ref(), q).unwrap();
            let e = QKernel::new(exact.as_ref(), q).unwrap();
            for i in 0..=120 {
                let x = lerp(*window, i as f64 / 120.0);
                let up = (n.ln_phi_up(x) - e.ln_phi_up(x)).exp_m1().abs();
                let down = (n.ln_phi_down(x) - e.ln_phi_down(x)).exp_m1().abs();
                ensure(up < 1e-6 && down < 1e-6, || format!("{} q={q} x={x}: {up:e} {down:e}", numeric.name()))?;
                worst = worst.max(up).max(down);
            }
        }
        let x = lerp(*window, 0.5);
        let (lo, hi) = (lerp(*window, 0.2), lerp(*window, 0.8));
        for q in [0.1, 0.5, 2.0] {
            let got = Solver::new(numeric.as_ref()).exit_transform(q, x, lo, hi).map_err(|e| e.to_string())?.value;
            let want = Solver::new(exact.as_ref()).exit_transform(q, x, lo, hi).map_err(|e| e.to_string())?.value;
            ensure((got - want).abs() < 1e-5, || format!("{} exit q={q}: {got} vs {want}", numeric.name()))?;
        }
    }
    Ok(format!("largest relative eigenfunction error {worst:.1e}; exit transforms within 1e-5"))
}

fn strip_timing(text: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    v.as_object_mut().unwrap().remove("timestamp");
    for row in v["rows"].as_array_mut().unwrap() {
        row.as_object_mut().unwrap().remove("elapsed_ms");
    }
    v
}

fn determinism() -> Verdict {
    let args = [
        "verify", "mc", "--target", "occ-dd-above-until-dd", "--q", "0.5", "--y", "0.3", "--a", "1", "--paths", "20000",
        "--dt", "2e-3", "--bridge", "--seed", "11",
    ];
    let runs: Vec<String> = (0..2).map(|_| render(&run_cli(&args), Format::Json).unwrap()).collect();
    ensure(strip_timing(&runs[0]) == strip_timing(&runs[1]), || "JSON differs between runs".into())?;
    let mut threaded = args.to_vec();
    threaded.extend(["--threads", "3"]);
    let third = render(&run_cli(&threaded), Format::Json).unwrap();
    ensure(strip_timing(&runs[0]) == strip_timing(&third), || "JSON differs with another thread count".into())?;
    Ok("identical JSON across repeats and thread counts".into())
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("kernel laws", kernel_laws),
        ("closed form vs quadrature", closed_form_grids),
        ("identity in law", identity_in_law),
        ("occupation laws vs Monte Carlo", occupation_vs_mc),
        ("ordering partition", ordering_partition),
        ("branch continuity", branch_continuity),
        ("driftless symmetry", driftless_symmetry),
        ("inversion layer", inversion_layer),
        ("pricing", pricing),
        ("numeric eigenfunctions", numeric_eigenfunctions),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                println!("criterion {:>2} FAIL {name}: {detail}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
