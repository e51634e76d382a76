use std::fmt;

use crate::scalar::Real;

/// Signals a query can constrain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SignalName {
    /// Per-batch accuracy difference (exact - approximate), percentage points.
    AccDiff,
    /// Mean accuracy drop over the evaluated set; constant over the trace.
    AvgAccDrop,
    /// Energy gain of the evaluated mapping; constant over the trace.
    EnergyGain,
}

impl SignalName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SignalName::AccDiff => "acc_diff",
            SignalName::AvgAccDrop => "avg_acc_drop",
            SignalName::EnergyGain => "energy_gain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "acc_diff" => Some(SignalName::AccDiff),
            "avg_acc_drop" => Some(SignalName::AvgAccDrop),
            "energy_gain" => Some(SignalName::EnergyGain),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound<T> {
    Const(T),
    /// The query's free parameter.
    Param,
}

/// `signal <= bound`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom<T> {
    pub signal: SignalName,
    pub bound: Bound<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Formula<T> {
    Atom(Atom<T>),
    And(Vec<Formula<T>>),
    Implies(Box<Formula<T>>, Box<Formula<T>>),
    Always(Box<Formula<T>>),
    /// Holds when the body holds on at least `percent`% of the remaining points.
    RelaxedAlways {
        percent: T,
        body: Box<Formula<T>>,
    },
}

impl<T: Real> Formula<T> {
    pub fn atom(signal: SignalName, bound: T) -> Self {
        Formula::Atom(Atom {
            signal,
            bound: Bound::Const(bound),
        })
    }

    pub fn always(body: Formula<T>) -> Self {
        Formula::Always(Box::new(body))
    }

    pub fn relaxed(percent: T, body: Formula<T>) -> Self {
        Formula::RelaxedAlways {
            percent,
            body: Box::new(body),
        }
    }

    pub fn implies(lhs: Formula<T>, rhs: Formula<T>) -> Self {
        Formula::Implies(Box::new(lhs), Box::new(rhs))
    }

    /// `always (energy_gain <= θ)`.
    pub fn energy_antecedent() -> Self {
        Formula::always(Formula::Atom(Atom {
            signal: SignalName::EnergyGain,
            bound: Bound::Param,
        }))
    }

    pub fn param_count(&self) -> usize {
        match self {
            Formula::Atom(a) => usize::from(a.bound == Bound::Param),
            Formula::And(parts) => parts.iter().map(Formula::param_count).sum(),
            Formula::Implies(a, b) => a.param_count() + b.param_count(),
            Formula::Always(b) | Formula::RelaxedAlways { body: b, .. } => b.param_count(),
        }
    }
}

/// A parsed query: one declared parameter and an implication
/// `always (energy_gain <= θ) -> consequent`.
#[derive(Clone, Debug, PartialEq)]
pub struct Query<T> {
    pub param: String,
    pub formula: Formula<T>,
}

impl<T: Real> Query<T> {
    pub fn new(param: impl Into<String>, consequent: Formula<T>) -> Self {
        Self {
            param: param.into(),
            formula: Formula::implies(Formula::energy_antecedent(), consequent),
        }
    }

    /// The constraints right of the implication.
    pub fn consequent(&self) -> &Formula<T> {
        match &self.formula {
            Formula::Implies(_, rhs) => rhs,
            other => other,
        }
    }

    /// Top-level conjuncts of the consequent.
    pub fn conjuncts(&self) -> Vec<&Formula<T>> {
        match self.consequent() {
            Formula::And(parts) => parts.iter().collect(),
            other => vec![other],
        }
    }
}

struct Shown<'a, T>(&'a Formula<T>, &'a str);

impl<T: Real> fmt::Display for Shown<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let param = self.1;
        let nested = |g: &Formula<T>, f: &mut fmt::Formatter<'_>| match g {
            Formula::And(_) | Formula::Implies(..) => write!(f, "({})", Shown(g, param)),
            _ => write!(f, "{}", Shown(g, param)),
        };
        match self.0 {
            Formula::Atom(a) => match a.bound {
                Bound::Const(c) => write!(f, "{} <= {}", a.signal.as_str(), c),
                Bound::Param => write!(f, "{} <= {}", a.signal.as_str(), param),
            },
            Formula::And(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" and ")?;
                    }
                    nested(p, f)?;
                }
                Ok(())
            }
            Formula::Implies(a, b) => {
                nested(a, f)?;
                f.write_str(" -> ")?;
                nested(b, f)
            }
            Formula::Always(b) => write!(f, "always ({})", Shown(b.as_ref(), param)),
            Formula::RelaxedAlways { percent, body } => {
                write!(f, "always[{}%] ({})", percent, Shown(body.as_ref(), param))
            }
        }
    }
}

impl<T: Real> fmt::Display for Formula<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Shown(self, "theta"))
    }
}

impl<T: Real> fmt::Display for Query<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "param {}; assert {};", self.param, Shown(&self.formula, &self.param))
    }
}
