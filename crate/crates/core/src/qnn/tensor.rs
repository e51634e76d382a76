use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-tensor asymmetric quantization: `real = scale * (q - zero_point)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: u8,
}

impl QuantParams {
    pub fn new(scale: f64, zero_point: u8) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Validation(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { scale, zero_point })
    }
}

/// A dense uint8 tensor in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantTensor {
    shape: Vec<usize>,
    values: Vec<u8>,
    params: QuantParams,
}

impl QuantTensor {
    pub fn new(shape: Vec<usize>, values: Vec<u8>, params: QuantParams) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Structure(format!("shape {shape:?} must have positive dims")));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Structure(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        let params = QuantParams::new(params.scale, params.zero_point)?;
        Ok(Self { shape, values, params })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn params(&self) -> QuantParams {
        self.params
    }

    pub fn scale(&self) -> f64 {
        self.params.scale
    }

    pub fn zero_point(&self) -> u8 {
        self.params.zero_point
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<u8> {
        self.values
    }

    pub(crate) fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.values.len() {
            return Err(Error::Structure(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_count_mismatch() {
        let p = QuantParams::new(1.0, 0).unwrap();
        assert!(QuantTensor::new(vec![2, 2], vec![0; 3], p).is_err());
        assert!(QuantTensor::new(vec![2, 2], vec![0; 4], p).is_ok());
    }

    #[test]
    fn rejects_bad_scale() {
        assert!(QuantParams::new(0.0, 0).is_err());
        assert!(QuantParams::new(-1.0, 0).is_err());
        assert!(QuantParams::new(f64::NAN, 0).is_err());
    }
}
