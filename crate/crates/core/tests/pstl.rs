//! Robustness semantics against an independent Boolean evaluator.

use axmap_core::pstl::{parse_query, robustness, robustness_signal, satisfies, Atom, Bound, Formula, SignalName};
use axmap_core::{Query, Trace};
use proptest::prelude::*;

/// Boolean truth of `phi` at point `t`, straight from the definitions.
fn holds(phi: &Formula<f64>, trace: &Trace, theta: f64, t: usize) -> bool {
    let n = trace.len();
    match phi {
        Formula::Atom(Atom { signal, bound }) => {
            let c = match bound {
                Bound::Const(c) => *c,
                Bound::Param => theta,
            };
            let x = match signal {
                SignalName::AccDiff => trace.acc_diff()[t],
                SignalName::AvgAccDrop => trace.avg_acc_drop(),
                SignalName::EnergyGain => trace.energy_gain(),
            };
            x <= c
        }
        Formula::And(parts) => parts.iter().all(|p| holds(p, trace, theta, t)),
        Formula::Implies(a, b) => !holds(a, trace, theta, t) || holds(b, trace, theta, t),
        Formula::Always(b) => (t..n).all(|s| holds(b, trace, theta, s)),
        Formula::RelaxedAlways { percent, body } => {
            let held = (t..n).filter(|&s| holds(body, trace, theta, s)).count();
            held as f64 * 100.0 >= percent * (n - t) as f64
        }
    }
}

fn leaf() -> impl Strategy<Value = Formula<f64>> {
    (0..3usize, -20.0f64..20.0).prop_map(|(s, c)| {
        let signal = [SignalName::AccDiff, SignalName::AvgAccDrop, SignalName::EnergyGain][s];
        Formula::atom(signal, if s == 2 { c / 40.0 + 0.5 } else { c })
    })
}

fn formula() -> impl Strategy<Value = Formula<f64>> {
    leaf().prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::And),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            inner.clone().prop_map(Formula::always),
            (prop::sample::select(vec![40.0, 60.0, 80.0, 100.0]), inner).prop_map(|(x, b)| Formula::relaxed(x, b)),
        ]
    })
}

fn trace() -> impl Strategy<Value = Trace> {
    (prop::collection::vec(-20.0f64..20.0, 1..60), 0.0f64..0.99).prop_map(|(d, g)| Trace::from_diffs(d, g).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn robustness_sign_matches_boolean(phi in formula(), tr in trace(), theta in 0.0f64..1.0) {
        let rho = robustness_signal(&phi, theta, &tr);
        for (t, r) in rho.iter().enumerate() {
            if r.abs() > 1e-12 {
                prop_assert_eq!(*r > 0.0, holds(&phi, &tr, theta, t), "t={} rho={}", t, r);
            }
        }
        if robustness(&phi, theta, &tr).abs() > 1e-12 {
            prop_assert_eq!(satisfies(&phi, theta, &tr), holds(&phi, &tr, theta, 0));
        }
    }

    #[test]
    fn relaxed_hundred_is_always(phi in formula(), tr in trace()) {
        let a = robustness_signal(&Formula::always(phi.clone()), 0.3, &tr);
        let r = robustness_signal(&Formula::relaxed(100.0, phi), 0.3, &tr);
        prop_assert_eq!(a, r);
    }

    #[test]
    fn robustness_non_increasing_in_x(phi in formula(), tr in trace(), x in 1.0f64..100.0, dx in 0.0f64..50.0) {
        let lo = robustness(&Formula::relaxed(x, phi.clone()), 0.3, &tr);
        let hi = robustness(&Formula::relaxed((x + dx).min(100.0), phi), 0.3, &tr);
        prop_assert!(hi <= lo);
    }

    #[test]
    fn conjunction_bounded_by_each_conjunct(parts in prop::collection::vec(formula(), 1..4), tr in trace()) {
        let all = robustness(&Formula::And(parts.clone()), 0.3, &tr);
        for p in &parts {
            prop_assert!(all <= robustness(p, 0.3, &tr));
        }
        prop_assert!(parts.iter().any(|p| robustness(p, 0.3, &tr) == all));
    }

    #[test]
    fn query_text_round_trips(rhs in formula()) {
        let q = Query::new("theta", rhs);
        let text = q.to_string();
        let back: Query = parse_query(&text).unwrap();
        prop_assert_eq!(back.to_string(), text);
        prop_assert_eq!(back, q);
    }
}

#[test]
fn relaxed_example_by_hand() {
    // diffs 1..10; acc_diff <= 8 holds on 8 of 10 points.
    let tr = Trace::from_diffs((1..=10).map(f64::from).collect(), 0.1).unwrap();
    let body = Formula::atom(SignalName::AccDiff, 8.0);
    // k = 8: 8th largest of (7, 6, ..., -2) is 0.
    assert_eq!(robustness(&Formula::relaxed(80.0, body.clone()), 0.0, &tr), 0.0);
    assert_eq!(robustness(&Formula::relaxed(90.0, body.clone()), 0.0, &tr), -1.0);
    assert_eq!(robustness(&Formula::relaxed(40.0, body.clone()), 0.0, &tr), 4.0);
    assert_eq!(robustness(&Formula::always(body), 0.0, &tr), -2.0);
}

#[test]
fn vacuous_and_plain_implication() {
    let q: Query =
        parse_query("param theta; assert always (energy_gain <= theta) -> always (avg_acc_drop <= 0.5);").unwrap();
    let tr = Trace::from_diffs(vec![0.4, 0.4], 0.25).unwrap();
    assert!(q.satisfies(0.2, &Trace::from_diffs(vec![3.0], 0.25).unwrap()));
    assert!(q.satisfies(0.25, &tr));
    assert!((q.rhs_robustness(&tr) - 0.1).abs() < 1e-12);
}
