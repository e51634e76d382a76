//! Deterministic 8-bit quantized inference with an injectable multiplier.
//!
//! Activations and weights are per-tensor asymmetric uint8. Accumulation is
//! exact integer arithmetic that must stay within `i32`; requantization uses a
//! fixed-point multiplier with half-away-from-zero rounding and saturates to
//! `[0, 255]`. Both conv2d and dense layers route every weight x activation
//! product through [`Multiplier`]; a layer can opt out of approximation via
//! [`MacLayer::approximate`].

mod dataset;
mod engine;
mod format;
mod model;
mod tensor;

pub use dataset::{Batch, Dataset};
pub use engine::{
    conv2d_q, correct_count, count_multiplications, dense_q, forward, infer_batch, predict, ExactMultiplier,
    Instrumented, Multiplier,
};
pub use format::AXQM_VERSION;
pub use model::{Layer, MacLayer, QuantModel, Requant};
pub use tensor::{QuantParams, QuantTensor};
