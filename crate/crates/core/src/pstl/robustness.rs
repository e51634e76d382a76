use std::cmp::Ordering;

use super::ast::{Atom, Bound, Formula, Query, SignalName};
use super::trace::Trace;
use crate::scalar::Real;

fn bound_value<T: Real>(atom: &Atom<T>, theta: T) -> T {
    match atom.bound {
        Bound::Const(c) => c,
        Bound::Param => theta,
    }
}

fn signal_at<T: Real>(signal: SignalName, trace: &Trace<T>, t: usize) -> T {
    match signal {
        SignalName::AccDiff => trace.acc_diff()[t],
        SignalName::AvgAccDrop => trace.avg_acc_drop(),
        SignalName::EnergyGain => trace.energy_gain(),
    }
}

/// Number of points out of `n` a relaxed operator requires: `ceil(percent · n / 100)`, in `[1, n]`.
pub fn required_points<T: Real>(percent: T, n: usize) -> usize {
    let k = (percent * T::from_count(n as u64) / T::lit(100.0)).ceil();
    k.to_usize().unwrap_or(n).clamp(1, n)
}

/// Pointwise robustness of `phi` at every batch index.
///
/// Temporal operators at index `t` range over the suffix `t..N`.
pub fn robustness_signal<T: Real>(phi: &Formula<T>, theta: T, trace: &Trace<T>) -> Vec<T> {
    let n = trace.len();
    match phi {
        Formula::Atom(a) => {
            let c = bound_value(a, theta);
            (0..n).map(|t| c - signal_at(a.signal, trace, t)).collect()
        }
        Formula::And(parts) => {
            let mut acc = vec![T::infinity(); n];
            for p in parts {
                for (a, r) in acc.iter_mut().zip(robustness_signal(p, theta, trace)) {
                    *a = a.min(r);
                }
            }
            acc
        }
        Formula::Implies(lhs, rhs) => {
            let l = robustness_signal(lhs, theta, trace);
            let r = robustness_signal(rhs, theta, trace);
            l.into_iter().zip(r).map(|(a, b)| (T::zero() - a).max(b)).collect()
        }
        Formula::Always(body) => {
            let mut s = robustness_signal(body, theta, trace);
            for t in (0..n.saturating_sub(1)).rev() {
                s[t] = s[t].min(s[t + 1]);
            }
            s
        }
        Formula::RelaxedAlways { percent, body } => {
            let s = robustness_signal(body, theta, trace);
            (0..n)
                .map(|t| {
                    let mut suffix = s[t..].to_vec();
                    let k = required_points(*percent, suffix.len());
                    let (_, kth, _) =
                        suffix.select_nth_unstable_by(k - 1, |a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
                    *kth
                })
                .collect()
        }
    }
}

/// Robustness of `phi` on the whole trace; `>= 0` means satisfied.
pub fn robustness<T: Real>(phi: &Formula<T>, theta: T, trace: &Trace<T>) -> T {
    robustness_signal(phi, theta, trace)[0]
}

fn satisfaction_signal<T: Real>(phi: &Formula<T>, theta: T, trace: &Trace<T>) -> Vec<bool> {
    let n = trace.len();
    match phi {
        Formula::Atom(a) => {
            let c = bound_value(a, theta);
            (0..n).map(|t| signal_at(a.signal, trace, t) <= c).collect()
        }
        Formula::And(parts) => {
            let mut acc = vec![true; n];
            for p in parts {
                for (a, r) in acc.iter_mut().zip(satisfaction_signal(p, theta, trace)) {
                    *a &= r;
                }
            }
            acc
        }
        Formula::Implies(lhs, rhs) => {
            let l = satisfaction_signal(lhs, theta, trace);
            let r = satisfaction_signal(rhs, theta, trace);
            l.into_iter().zip(r).map(|(a, b)| !a || b).collect()
        }
        Formula::Always(body) => {
            let s = satisfaction_signal(body, theta, trace);
            (0..n).map(|t| s[t..].iter().all(|&b| b)).collect()
        }
        Formula::RelaxedAlways { percent, body } => {
            let s = satisfaction_signal(body, theta, trace);
            (0..n)
                .map(|t| {
                    let held = s[t..].iter().filter(|&&b| b).count();
                    // at least `percent`% of the remaining points
                    T::from_count(held as u64) * T::lit(100.0) >= *percent * T::from_count((n - t) as u64)
                })
                .collect()
        }
    }
}

/// Boolean semantics, evaluated without robustness.
pub fn satisfies<T: Real>(phi: &Formula<T>, theta: T, trace: &Trace<T>) -> bool {
    satisfaction_signal(phi, theta, trace)[0]
}

/// Robustness and verdict of one top-level conjunct of a query's consequent.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjunctStatus<T> {
    pub text: String,
    pub robustness: T,
    pub satisfied: bool,
}

impl<T: Real> Query<T> {
    /// Robustness of the full implication at parameter value `theta`.
    pub fn robustness(&self, theta: T, trace: &Trace<T>) -> T {
        robustness(&self.formula, theta, trace)
    }

    pub fn satisfies(&self, theta: T, trace: &Trace<T>) -> bool {
        satisfies(&self.formula, theta, trace)
    }

    /// Robustness of the constraints alone (independent of θ).
    pub fn rhs_robustness(&self, trace: &Trace<T>) -> T {
        robustness(self.consequent(), T::zero(), trace)
    }

    pub fn conjunct_status(&self, trace: &Trace<T>) -> Vec<ConjunctStatus<T>> {
        self.conjuncts()
            .into_iter()
            .map(|c| {
                let r = robustness(c, T::zero(), trace);
                ConjunctStatus {
                    text: c.to_string(),
                    robustness: r,
                    satisfied: r >= T::zero(),
                }
            })
            .collect()
    }

    /// Bounds of every `acc_diff` atom in the consequent, in order of appearance.
    pub fn acc_diff_bounds(&self) -> Vec<T> {
        fn walk<T: Real>(f: &Formula<T>, out: &mut Vec<T>) {
            match f {
                Formula::Atom(Atom {
                    signal: SignalName::AccDiff,
                    bound: Bound::Const(c),
                }) => out.push(*c),
                Formula::Atom(_) => {}
                Formula::And(parts) => parts.iter().for_each(|p| walk(p, out)),
                Formula::Implies(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Formula::Always(b) | Formula::RelaxedAlways { body: b, .. } => walk(b, out),
            }
        }
        let mut out = Vec::new();
        walk(self.consequent(), &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pstl::parse_query;

    fn acc(c: f64) -> Formula<f64> {
        Formula::atom(SignalName::AccDiff, c)
    }

    #[test]
    fn always_is_min_margin() {
        let t = Trace::from_diffs(vec![1.0, 2.0, 3.0], 0.0).unwrap();
        assert_eq!(robustness(&Formula::always(acc(5.0)), 0.0, &t), 2.0);
    }

    #[test]
    fn relaxed_80_example() {
        let t = Trace::from_diffs(vec![0.0, 1.0, 1.0, 2.0, 2.0, 2.0, 4.0, 4.0, 6.0, 6.0], 0.0).unwrap();
        let phi = Formula::relaxed(80.0, acc(3.0));
        assert_eq!(robustness(&phi, 0.0, &t), -1.0);
        assert!(!satisfies(&phi, 0.0, &t));
        // 60% of the batches are within 3
        assert!(satisfies(&Formula::relaxed(60.0, acc(3.0)), 0.0, &t));
    }

    #[test]
    fn relaxed_100_is_always() {
        let t = Trace::from_diffs(vec![3.0, -1.0, 7.5, 2.0], 0.0).unwrap();
        assert_eq!(
            robustness(&Formula::relaxed(100.0, acc(4.0)), 0.0, &t),
            robustness(&Formula::always(acc(4.0)), 0.0, &t)
        );
    }

    #[test]
    fn required_points_boundaries() {
        assert_eq!(required_points(80.0, 10), 8);
        assert_eq!(required_points(100.0, 7), 7);
        assert_eq!(required_points(0.1, 7), 1);
        assert_eq!(required_points(60.0, 5), 3);
        assert_eq!(required_points(40.0f32, 25), 10);
    }

    #[test]
    fn q7_vacuity_and_satisfaction() {
        let q =
            parse_query::<f64>("param theta; assert always (energy_gain <= theta) -> always (avg_acc_drop <= 0.5);")
                .unwrap();
        let high_gain = Trace::from_diffs(vec![3.0, 3.0], 0.25).unwrap();
        assert!(q.satisfies(0.2, &high_gain));
        assert!(q.robustness(0.2, &high_gain) > 0.0);
        let t = Trace::from_diffs(vec![0.3, 0.5], 0.2).unwrap();
        assert!(q.satisfies(0.25, &t));
        approx::assert_abs_diff_eq!(q.robustness(0.25, &t), 0.1, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(q.rhs_robustness(&t), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn conjunction_is_min() {
        let t = Trace::from_diffs(vec![1.0, 4.0], 0.1).unwrap();
        let a = Formula::always(acc(5.0));
        let b = Formula::atom(SignalName::AvgAccDrop, 2.0);
        let both = Formula::And(vec![a.clone(), b.clone()]);
        let r = robustness(&both, 0.0, &t);
        assert_eq!(r, robustness(&a, 0.0, &t).min(robustness(&b, 0.0, &t)));
    }
}
