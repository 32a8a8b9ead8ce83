use std::collections::BTreeMap;

use drawdown_lab::expr::Expr;
use drawdown_lab::grid::parse_values;
use drawdown_lab::output::sig6;
use drawdown_lab::{from_csv, from_json, to_csv, to_json, Report, Row};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, any::<f64>().prop_filter("finite", |v| v.is_finite())]
}

fn row() -> impl Strategy<Value = Row> {
    (
        finite(),
        finite(),
        proptest::option::of(finite()),
        proptest::option::of(0.0..1.0f64),
        0.0..1e4f64,
        any::<bool>(),
        proptest::option::of(finite()),
        proptest::option::of(any::<bool>()),
        proptest::option::of(0u64..10_000_000),
    )
        .prop_map(|(q, a, value, error, elapsed_ms, ok, reference, pass, n)| {
            let mut inputs = BTreeMap::new();
            inputs.insert("q".to_string(), q);
            inputs.insert("a".to_string(), a);
            Row {
                inputs,
                value: if ok { value } else { None },
                error,
                method: ok.then(|| "quadrature".to_string()),
                status: if ok { "ok".into() } else { "MaxDepthExceeded".into() },
                message: (!ok).then(|| "quadrature did not converge, \"partial\" value".to_string()),
                elapsed_ms,
                reference,
                pass,
                n_effective: n,
                ..Row::default()
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn serialized_rows_round_trip(rows in prop::collection::vec(row(), 0..8)) {
        let report = Report {
            schema: "drawdown-lab/1".into(),
            command: "law".into(),
            target: "drawdown-transform".into(),
            model: "bm(mu=0, sigma=1)".into(),
            parameters: vec!["q".into(), "a".into()],
            seed: Some(3),
            timestamp: 0,
            verdict: None,
            rows,
        };
        prop_assert_eq!(&from_json(&to_json(&report).unwrap()).unwrap(), &report);
        prop_assert_eq!(from_csv(&to_csv(&report).unwrap()).unwrap(), report.rows);
    }

    #[test]
    fn six_significant_digits_survive(v in finite()) {
        let s = sig6(v);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-6 * v.abs() + 1e-300, "{} -> {}", v, s);
    }

    #[test]
    fn range_grids_are_inclusive_and_even(start in -5.0..5.0f64, n in 0usize..50, step in 0.01..1.0f64) {
        let stop = start + n as f64 * step;
        let values = parse_values("a", &format!("{start}:{stop}:{step}")).unwrap();
        prop_assert_eq!(values.len(), n + 1);
        prop_assert!((values[n] - stop).abs() < 1e-9 * (1.0 + stop.abs()));
        for w in values.windows(2) {
            prop_assert!((w[1] - w[0] - step).abs() < 1e-9);
        }
    }

    #[test]
    fn polynomials_evaluate_like_rust(c0 in -10.0..10.0f64, c1 in -10.0..10.0f64, c2 in -10.0..10.0f64, x in -3.0..3.0f64) {
        let e = Expr::parse(&format!("{c0} + {c1}*x + {c2}*x^2")).unwrap();
        let expect = c0 + c1 * x + c2 * x.powf(2.0);
        prop_assert!((e.eval(x) - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
    }
}
