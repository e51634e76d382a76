//! Behavioral models of reconfigurable approximate multipliers.
//!
//! Every mode is an exhaustive 256x256 table of unsigned products, so any
//! published 8x8 multiplier can be plugged in by tabulating it.

mod lut;
mod mode;

pub use lut::{load_lut, lut_from_bytes, lut_to_bytes, save_lut, AXLU_VERSION};
pub use mode::{AxMode, AxMultiplier, ErrorProfile, DEFAULT_ENERGIES, TABLE_LEN};
