use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast};

/// Real scalar used by the trace, query and mapping arithmetic: `f32` or `f64`.
pub trait Real: Float + FromPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static {
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn from_count(v: u64) -> Self {
        Self::from_u64(v).expect("count representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}
