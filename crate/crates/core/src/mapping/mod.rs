//! From per-layer fraction vectors to weight-value ranges, mode selection,
//! utilization and energy gain.

mod file;
mod plan;
mod ranges;

pub use file::{AxmapFile, AxmapLayer, AXMAP_VERSION};
pub use plan::{
    approximate_flags, energy_gain, mapped_multiplier, model_histograms, plan, plan_with_histograms, utilization,
    FractionVectors, LayerPlan, MappedMultiplier, MappingPlan, Utilization,
};
pub use ranges::{
    layer_histogram, meets, mode_for_weight, ranges_from_fractions, BinRange, LayerRanges, WeightHistogram,
};
