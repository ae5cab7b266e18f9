//! Engine results checked against closed forms computed independently here.

use stockflow_core::corpus::{BASELINE_ID, IMPROVED_ID};
use stockflow_core::engine::builtins::{builtin_random_uniform, builtin_step};
use stockflow_core::engine::overrides_from;
use stockflow_core::{compile_bundled, load_model, CompiledModel, Overrides, RunResult};

const CONTROLS: &str = "INITIAL TIME = 0\nTIME STEP = 0.125\nSAVEPER = 0.125\n";

fn model(body: &str, final_time: f64) -> CompiledModel {
    let src = format!("{CONTROLS}FINAL TIME = {final_time}\n{body}");
    load_model(&src, "t").unwrap()
}

fn run(m: &CompiledModel) -> RunResult {
    m.simulate(&Overrides::new(), 0).unwrap()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-300)
}

#[test]
fn smooth_matches_geometric_closed_form_exactly() {
    // factor 1 - dt/T = 0.75; 1 - 0.75^n is exact in f64 for n <= 25.
    let r = run(&model("s = SMOOTHI(1, 0.5, 0)\n", 3.0));
    let s = r.series("s").unwrap();
    assert_eq!(s.len(), 25);
    for (n, v) in s.iter().enumerate() {
        assert_eq!(*v, 1.0 - 0.75f64.powi(n as i32), "n={n}");
    }
}

#[test]
fn smooth_closed_form_general_input() {
    let r = run(&model("s = SMOOTHI(7.3, 2.9, -1.1)\n", 20.0));
    let f: f64 = 1.0 - 0.125 / 2.9;
    for (n, v) in r.series("s").unwrap().iter().enumerate() {
        let want = 7.3 + (-1.1 - 7.3) * f.powi(n as i32);
        assert!(rel_close(*v, want, 1e-12), "n={n}: {v} vs {want}");
    }
}

#[test]
fn smooth_starts_at_its_input() {
    let r = run(&model("u = 4 + time\ns = SMOOTH(u, 2)\n", 1.0));
    assert_eq!(r.value_at("s", 0.0), Some(4.0));
}

#[test]
fn delay_fixed_shifts_a_ramp() {
    let r = run(&model("ramp = 2 * time + 1\nd = DELAY FIXED(ramp, 1.5, -1)\n", 10.0));
    for (t, row) in r.times.iter().zip(&r.rows) {
        let d = row[r.column_index("d").unwrap()];
        let want = if *t < 1.5 { -1.0 } else { 2.0 * (t - 1.5) + 1.0 };
        assert_eq!(d, want, "t={t}");
    }
}

#[test]
fn delay_rounds_to_whole_steps_with_warning() {
    let r = run(&model("d = DELAY FIXED(time, 0.3, 0)\n", 2.0));
    // round(0.3 / 0.125) = 2 steps.
    assert_eq!(r.value_at("d", 1.0), Some(0.75));
    assert!(r.meta.warnings.iter().any(|w| w.contains("DELAY FIXED")));
}

#[test]
fn euler_constant_flow_is_exact() {
    let r = run(&model("s = INTEG(3, 1)\n", 10.0));
    for (n, v) in r.series("s").unwrap().iter().enumerate() {
        assert_eq!(*v, 1.0 + 0.375 * n as f64);
    }
}

#[test]
fn euler_linear_decay_matches_geometric_sequence() {
    // s' = -s, dt = 0.125: s_n = (7/8)^n, exact while 7^n fits the mantissa.
    let r = run(&model("s = INTEG(-s, 1)\n", 2.0));
    for (n, v) in r.series("s").unwrap().iter().enumerate() {
        assert_eq!(*v, 0.875f64.powi(n as i32), "n={n}");
    }
}

#[test]
fn step_definition_around_start() {
    let r = run(&model("s = STEP(2, 1)\n", 2.0));
    assert_eq!(r.value_at("s", 0.875), Some(0.0));
    assert_eq!(r.value_at("s", 1.0), Some(2.0));
    assert_eq!(r.value_at("s", 1.125), Some(2.0));
    assert_eq!(builtin_step(2.0, 1.0, 1.0 - 1e-12), 0.0);
}

#[test]
fn random_uniform_streams_and_range() {
    let mut seen_low = false;
    let mut seen_high = false;
    for step in 0..100_000u64 {
        let v = builtin_random_uniform(-0.5, 0.5, 3, 958, 1, step);
        assert_eq!(
            v.to_bits(),
            builtin_random_uniform(-0.5, 0.5, 3, 958, 1, step).to_bits()
        );
        assert!((-0.5..0.5).contains(&v), "{v}");
        seen_low |= v < -0.49;
        seen_high |= v > 0.49;
    }
    assert!(seen_low && seen_high);
    // Different sites and seeds give different streams.
    let a: Vec<f64> = (0..16)
        .map(|s| builtin_random_uniform(0.0, 1.0, 0, 958, 0, s))
        .collect();
    let b: Vec<f64> = (0..16)
        .map(|s| builtin_random_uniform(0.0, 1.0, 0, 958, 1, s))
        .collect();
    let c: Vec<f64> = (0..16)
        .map(|s| builtin_random_uniform(0.0, 1.0, 1, 958, 0, s))
        .collect();
    assert_ne!(a, b);
    assert_ne!(a, c);
}

#[test]
fn random_sample_mean_is_centered() {
    let n = 100_000u64;
    let mean = (0..n)
        .map(|s| builtin_random_uniform(-1.0, 1.0, 42, 7, 0, s))
        .sum::<f64>()
        / n as f64;
    // Standard error is about 0.0018.
    assert!(mean.abs() < 0.01, "{mean}");
}

#[test]
fn baseline_equilibrium_before_the_shock() {
    let r = run(&compile_bundled(BASELINE_ID).unwrap());
    let trained = 2400.0 / 23.0;
    let trainee = trained * 3.0 / 36.0;
    let expect = [
        ("Trained Testers", trained),
        ("Trainee Testers", trainee),
        ("effective testing capacity", trained - 0.5 * trainee),
        ("complaints", 1.0),
        ("testers needed", 100.0),
        ("hiring rate", trained / 36.0),
        ("quitting rate", trained / 36.0),
        ("training completion rate", trainee / 3.0),
        ("quality perceived by customers", 1.0),
    ];
    let mut rows = 0;
    for (i, t) in r.times.iter().enumerate() {
        if *t >= 5.0 {
            break;
        }
        rows += 1;
        for (name, want) in expect {
            let v = r.rows[i][r.column_index(name).unwrap()];
            assert!(rel_close(v, want, 1e-9), "{name} at t={t}: {v} vs {want}");
        }
    }
    assert_eq!(rows, 40);
    assert!(rel_close(trained - 0.5 * trainee, 100.0, 1e-12));
}

#[test]
fn order_rate_step_at_five() {
    for id in [BASELINE_ID, IMPROVED_ID] {
        let r = run(&compile_bundled(id).unwrap());
        assert!(rel_close(r.value_at("order rate", 4.875).unwrap(), 10000.0, 1e-9));
        assert!(rel_close(r.value_at("order rate", 5.0).unwrap(), 12000.0, 1e-9));
    }
}

#[test]
fn production_follows_orders_by_the_delay() {
    for id in [BASELINE_ID, IMPROVED_ID] {
        let r = run(&compile_bundled(id).unwrap());
        let orders = r.series("order rate").unwrap();
        let prod = r.series("production rate").unwrap();
        // 3 months at 0.125 per row.
        for i in 24..orders.len() {
            assert_eq!(prod[i].to_bits(), orders[i - 24].to_bits(), "{id} row {i}");
        }
    }
}

#[test]
fn runs_are_deterministic_and_seed_free_without_noise() {
    let m = compile_bundled(BASELINE_ID).unwrap();
    let a = m.simulate(&Overrides::new(), 0).unwrap();
    let b = m.simulate(&Overrides::new(), 0).unwrap();
    let c = m.simulate(&Overrides::new(), 12345).unwrap();
    assert!(a.same_data(&b));
    assert!(a.same_data(&c));

    let noisy = overrides_from([("A", 1.0)]).unwrap();
    let x = m.simulate(&noisy, 7).unwrap();
    let y = m.simulate(&noisy, 7).unwrap();
    let z = m.simulate(&noisy, 8).unwrap();
    assert!(x.same_data(&y));
    assert!(!x.same_data(&z));
}

#[test]
fn noise_stays_within_a_tenth() {
    let m = compile_bundled(BASELINE_ID).unwrap();
    let r = m.simulate(&overrides_from([("A", 1.0)]).unwrap(), 0).unwrap();
    for (t, v) in r.times.iter().zip(r.series("test variation").unwrap()) {
        if *t >= 5.0 {
            assert!((-0.1..0.1).contains(&v), "t={t}: {v}");
        } else {
            assert_eq!(v, 0.0);
        }
    }
}

#[test]
fn stock_initial_override() {
    let m = compile_bundled(BASELINE_ID).unwrap();
    let r = m
        .simulate(&overrides_from([("Trained Testers", 50.0)]).unwrap(), 0)
        .unwrap();
    assert_eq!(r.value_at("Trained Testers", 0.0), Some(50.0));
}

#[test]
fn control_overrides_reshape_the_grid() {
    let m = compile_bundled(BASELINE_ID).unwrap();
    let r = m
        .simulate(&overrides_from([("FINAL TIME", 10.0), ("SAVEPER", 0.5)]).unwrap(), 0)
        .unwrap();
    assert_eq!(r.times.len(), 21);
    assert_eq!(*r.times.last().unwrap(), 10.0);
    assert!(m.simulate(&overrides_from([("TIME STEP", 0.0)]).unwrap(), 0).is_err());
}

#[test]
fn runtime_failures_name_variable_and_time() {
    let m = model("x = 1 / (2 - time)\n", 4.0);
    let err = m.simulate(&Overrides::new(), 0).unwrap_err();
    assert!(err.is_runtime());
    assert_eq!(err.to_string(), "\"x\" is not finite at time 2");

    let m = model("s = SMOOTH(1, 1 - time)\n", 4.0);
    assert!(m.simulate(&Overrides::new(), 0).unwrap_err().is_runtime());
}

#[test]
fn negative_turn_warns_once() {
    let r = run(&model("s = INTEG(-1, 1)\n", 3.0));
    let w: Vec<_> = r
        .meta
        .warnings
        .iter()
        .filter(|w| w.contains("turned negative"))
        .collect();
    assert_eq!(w.len(), 1);
    assert!(w[0].contains("1.125"), "{}", w[0]);
}
