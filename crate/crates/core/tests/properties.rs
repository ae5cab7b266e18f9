use proptest::prelude::*;

use stockflow_core::ast::{BinOp, BuiltinKind, CmpOp, Expr};
use stockflow_core::corpus::{BASELINE_ID, IMPROVED_ID};
use stockflow_core::csv_io::{read_csv, write_csv};
use stockflow_core::engine::builtins::builtin_random_uniform;
use stockflow_core::engine::{overrides_from, RunMeta};
use stockflow_core::lang::{parse_expr, parse_model, print_expr};
use stockflow_core::par::Execution;
use stockflow_core::scenario::{sweep_with, Registry, Scenario, SweepSpec};
use stockflow_core::{compile_bundled, normalize_name, RunResult};

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0.0f64..1e9).prop_map(Expr::Number),
        Just(Expr::Number(0.125)),
        prop::sample::select(vec!["x", "order rate", "Trained Testers", "time", "y2"]).prop_map(Expr::var),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 48, 3, |inner| {
        let bin = prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div]);
        let cmp = prop::sample::select(vec![CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne]);
        let call = prop::sample::select(vec![
            BuiltinKind::Smooth,
            BuiltinKind::SmoothI,
            BuiltinKind::DelayFixed,
            BuiltinKind::Step,
            BuiltinKind::RandomUniform,
            BuiltinKind::Max,
            BuiltinKind::Min,
        ]);
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (bin, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            (call, prop::collection::vec(inner.clone(), 3)).prop_map(|(k, mut args)| {
                args.truncate(k.arity());
                Expr::Call(k, args)
            }),
            (cmp, inner.clone(), inner.clone(), inner.clone(), inner).prop_map(|(op, a, b, t, e)| {
                Expr::Call(
                    BuiltinKind::IfThenElse,
                    vec![Expr::Compare(op, Box::new(a), Box::new(b)), t, e],
                )
            }),
        ]
    })
}

fn run_result() -> impl Strategy<Value = RunResult> {
    (1usize..6, 1usize..20).prop_flat_map(|(cols, rows)| {
        let value = prop_oneof![
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
            -1e6f64..1e6,
            Just(0.0),
            Just(-0.0),
        ];
        (
            prop::collection::vec(-1e3f64..1e3, rows),
            prop::collection::vec(prop::collection::vec(value, cols), rows),
        )
            .prop_map(move |(times, rows)| RunResult {
                columns: (0..cols)
                    .map(|i| normalize_name(&format!("Var {i}")).unwrap())
                    .collect(),
                times,
                rows,
                meta: RunMeta::default(),
            })
    })
}

proptest! {
    #[test]
    fn print_then_parse_is_identity(e in expr()) {
        let text = print_expr(&e);
        let back = parse_expr(&text).unwrap_or_else(|err| panic!("{text}: {err}"));
        prop_assert_eq!(&back, &e, "{}", text);
        prop_assert_eq!(print_expr(&back), text);
    }

    #[test]
    fn csv_round_trip_is_bit_exact(r in run_result()) {
        let text = write_csv(&r, None).unwrap();
        let back = read_csv(&text).unwrap();
        prop_assert!(back.same_data(&r));
        prop_assert_eq!(write_csv(&back, None).unwrap(), text);
    }

    #[test]
    fn random_uniform_stays_in_range(seed: u64, site_seed: u64, site in 0usize..64, step: u64, lo in -1e3f64..1e3, width in 1e-3f64..1e3) {
        let v = builtin_random_uniform(lo, lo + width, seed, site_seed, site, step);
        prop_assert!(v >= lo && v < lo + width);
    }

    #[test]
    fn parser_reports_sorted_errors_without_panicking(lines in prop::collection::vec("[a-z =+*/()0-9,.<-]{0,24}", 0..8)) {
        if let Err(errs) = parse_model(&lines.join("\n"), "p") {
            prop_assert!(!errs.is_empty());
            let pos: Vec<_> = errs.iter().map(|e| (e.line, e.column)).collect();
            let mut sorted = pos.clone();
            sorted.sort();
            prop_assert_eq!(pos, sorted);
            prop_assert!(errs.iter().all(|e| e.column >= 1 && e.line >= 1));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn production_is_orders_shifted_by_the_delay(
        improved: bool,
        hiring in 1u32..=32,
        production in 1u32..=48,
        a in 0u32..=1,
        seed in 0u64..1000,
    ) {
        let id = if improved { IMPROVED_ID } else { BASELINE_ID };
        let m = compile_bundled(id).unwrap();
        let pd = production as f64 * 0.25;
        let o = overrides_from([
            ("HIRING DELAY", hiring as f64 * 0.25),
            ("PRODUCTION DELAY", pd),
            ("A", a as f64),
        ]).unwrap();
        let Ok(r) = m.simulate(&o, seed) else { return Ok(()) };
        let orders = r.series("order rate").unwrap();
        let prod = r.series("production rate").unwrap();
        let shift = (pd / 0.125) as usize;
        for i in shift..orders.len() {
            prop_assert_eq!(prod[i].to_bits(), orders[i - shift].to_bits());
        }
        for p in prod.iter().take(shift) {
            prop_assert_eq!(p.to_bits(), orders[0].to_bits());
        }
    }

    #[test]
    fn simulation_is_deterministic(a in 0u32..=1, seed: u64, hiring in 1u32..=16) {
        let m = compile_bundled(BASELINE_ID).unwrap();
        let o = overrides_from([("A", a as f64), ("HIRING DELAY", hiring as f64 * 0.5)]).unwrap();
        let x = m.simulate(&o, seed).unwrap();
        let y = m.simulate(&o, seed).unwrap();
        prop_assert!(x.same_data(&y));
    }

    #[test]
    fn parallel_sweep_matches_sequential(values in prop::collection::vec(1u32..=16, 1..6), a in 0u32..=1) {
        let reg = Registry::with_bundled();
        let spec = SweepSpec {
            base: Scenario::new("base", BASELINE_ID).with("A", a as f64).seed(3),
            param: normalize_name("HIRING DELAY").unwrap(),
            values: values.iter().map(|v| *v as f64 * 0.5).collect(),
        };
        let seq = sweep_with(&reg, &spec, Execution::Sequential).unwrap();
        let par = sweep_with(&reg, &spec, Execution::Parallel).unwrap();
        prop_assert_eq!(seq.len(), par.len());
        for ((v1, r1), (v2, r2)) in seq.iter().zip(&par) {
            prop_assert_eq!(v1, v2);
            prop_assert!(r1.same_data(r2));
            prop_assert_eq!(&r1.meta, &r2.meta);
        }
    }
}
