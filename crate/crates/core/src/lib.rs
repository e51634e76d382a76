//! Weight-to-approximation mapping for 8-bit quantized CNNs running on
//! reconfigurable approximate multipliers, searched under parametric
//! temporal-logic constraints on the per-batch accuracy drop.
//!
//! The numeric core of [`pstl`] and [`mapping`] is generic over [`Real`]; the
//! aliases below fix it to `f64`, which is what the search and file formats use.

pub mod axmult;
mod error;
pub mod mapping;
pub mod mining;
pub mod pstl;
pub mod qnn;
pub mod report;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Trace = pstl::Trace<f64>;
pub type Query = pstl::Query<f64>;
pub type Formula = pstl::Formula<f64>;
pub type FractionVectors = mapping::FractionVectors<f64>;
pub type LayerRanges = mapping::LayerRanges<f64>;
pub type MappingPlan = mapping::MappingPlan<f64>;

/// Independent stream seed for `tag`, derived from a run seed (splitmix64).
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut z = tag
        .bytes()
        .fold(seed, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
