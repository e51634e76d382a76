//! Penalized simulated annealing over per-layer fraction vectors.
//!
//! Cost is `-energy_gain + 1000 · max(0, -rhs)`, where `rhs` is the robustness
//! of the query's consequent. The inverse temperature adapts to keep the
//! running acceptance rate near a target.

mod axlog;
mod search;
mod surrogate;
mod sut;

pub use axlog::{load_axlog, query_hash, records_from_axlog, records_to_axlog, save_axlog, Evaluation, Summary};
pub use search::{
    evaluate_mapping, pareto_indices, propose, random_fractions, reevaluate, run_mining, MiningConfig, MiningResult,
    TestRecord, PENALTY,
};
pub use surrogate::AnalyticSystem;
pub use sut::{subset_batches, DnnSystem, SystemUnderTest};
