use drawdown_core::closedform::BrownianMotion;
use drawdown_core::closedform::Bessel3;
use drawdown_mc::{estimate, fraction_below, ks_two_sample, trace, Functional, Scheme, SimConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bookkeeping_along_a_path(seed in any::<u64>(), path in 0u64..1000, bridge in any::<bool>(), mu in -1.0..1.0f64) {
        let model = BrownianMotion::new(mu, 1.0).unwrap();
        let cfg = SimConfig::new(1e-2, 1, seed).with_bridge(bridge);
        let steps = trace(&model, 0.0, &cfg, path, 400).unwrap();
        let (mut below, mut above, mut elapsed) = (0.0, 0.0, 0.0);
        for s in &steps {
            let y0 = s.drawdown0();
            let y1 = s.drawdown1();
            prop_assert!(y0 >= 0.0 && y1 >= 0.0);
            prop_assert!(s.drawup0() >= 0.0 && s.drawup1() >= 0.0);
            prop_assert!(((y1 + s.drawup1()) - (s.max1 - s.min1)).abs() <= 1e-12 * (1.0 + s.max1 - s.min1));
            prop_assert!(s.max1 >= s.max0 && s.min1 <= s.min0);
            let f = fraction_below(s.x0, s.x1, 0.1);
            prop_assert!((0.0..=1.0).contains(&f));
            below += s.h * f;
            above += s.h * (1.0 - f);
            elapsed += s.h;
        }
        prop_assert!((below + above - elapsed).abs() <= 1e-12 * elapsed);
        let last = steps.last().unwrap();
        prop_assert!((last.t1() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn norm3d_stays_positive(seed in any::<u64>(), x in 0.01..3.0f64) {
        let cfg = SimConfig::new(1e-2, 1, seed).with_scheme(Scheme::ExactNorm3d).with_bridge(true);
        let steps = trace(&Bessel3, x, &cfg, 0, 300).unwrap();
        prop_assert!(steps.iter().all(|s| s.x1 > 0.0 && s.x1.is_finite()));
    }

    #[test]
    fn estimates_respect_bounds(
        seed in any::<u64>(),
        q in 0.1..3.0f64,
        a in 0.2..1.5f64,
        b in 0.2..1.5f64,
        y in 0.05..0.9f64,
    ) {
        let model = BrownianMotion::new(0.2, 1.0).unwrap();
        let cfg = SimConfig::new(1e-2, 200, seed).with_bridge(true).with_richardson(0);
        for f in [
            Functional::DrawdownFirst { q, a, b },
            Functional::ClockFirst { q, a, b },
            Functional::OccDdAboveUntilDd { q, y: y * a, a },
            Functional::OccDdAboveAtExp { q, p: 1.0, y },
            Functional::ParisianExceed { y, k: 0.3, t: 1.0 },
        ] {
            let e = estimate(&model, 0.0, f, &cfg).unwrap();
            let (lo, hi) = f.bounds().unwrap();
            prop_assert!(e.estimate >= lo && e.estimate <= hi, "{:?} {}", f, e.estimate);
            prop_assert!(e.se >= 0.0);
        }
    }

    #[test]
    fn ks_statistic_symmetric(a in prop::collection::vec(-5.0..5.0f64, 1..60), b in prop::collection::vec(-5.0..5.0f64, 1..60)) {
        let t1 = ks_two_sample(&a, &b);
        let t2 = ks_two_sample(&b, &a);
        prop_assert!((t1.statistic - t2.statistic).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&t1.statistic));
        prop_assert!((0.0..=1.0).contains(&t1.p_value));
    }
}
