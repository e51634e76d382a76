//! Parametric temporal-logic queries over finite accuracy-drop traces.
//!
//! Atoms are `signal <= c`, with robustness `c - signal`. Conjunction takes the
//! minimum, implication `a -> b` is `max(-a, b)`, `always` the minimum over the
//! remaining points and `always[X%]` the k-th largest pointwise robustness with
//! `k = ceil(X/100 · n)`. Robustness zero counts as satisfied.

mod ast;
mod parser;
mod robustness;
mod trace;

pub use ast::{Atom, Bound, Formula, Query, SignalName};
pub use parser::parse_query;
pub use robustness::{required_points, robustness, robustness_signal, satisfies, ConjunctStatus};
pub use trace::Trace;
