use serde::{Deserialize, Serialize};

use super::tensor::{QuantParams, QuantTensor};
use crate::error::{Error, Result};

/// Fixed-point requantization multiplier: `round(acc * multiplier / 2^(31 + shift))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requant {
    pub multiplier: i32,
    pub shift: i32,
}

impl Requant {
    pub fn new(multiplier: i32, shift: i32) -> Result<Self> {
        let r = Self { multiplier, shift };
        r.validate()?;
        Ok(r)
    }

    /// Approximates a positive real multiplier.
    pub fn from_real(m: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Argument(format!("requant multiplier must be positive, got {m}")));
        }
        let mut exp = m.log2().floor() as i32 + 1;
        let mut mant = m / 2f64.powi(exp);
        // mant in [0.5, 1)
        while mant >= 1.0 {
            mant /= 2.0;
            exp += 1;
        }
        while mant < 0.5 {
            mant *= 2.0;
            exp -= 1;
        }
        let mut q = (mant * (1u64 << 31) as f64).round() as i64;
        if q == 1 << 31 {
            q /= 2;
            exp += 1;
        }
        Self::new(q as i32, -exp)
    }

    fn validate(&self) -> Result<()> {
        let total = 31 + self.shift;
        if self.multiplier <= 0 || !(1..=62).contains(&total) {
            return Err(Error::Validation(format!(
                "requant multiplier {} / shift {} out of range",
                self.multiplier, self.shift
            )));
        }
        Ok(())
    }

    /// Scales an accumulator, rounding half away from zero.
    pub fn apply(&self, acc: i64) -> i64 {
        let n = (31 + self.shift) as u32;
        let prod = acc as i128 * self.multiplier as i128;
        let half = 1i128 << (n - 1);
        let r = if prod >= 0 {
            (prod + half) >> n
        } else {
            -((-prod + half) >> n)
        };
        r as i64
    }
}

/// Parameters shared by the multiplier-bearing layers.
#[derive(Clone, Debug, PartialEq)]
pub struct MacLayer {
    /// `[out_channels, in_channels, kh, kw]` for conv, `[out, in]` for dense.
    pub weights: QuantTensor,
    pub bias: Vec<i32>,
    pub input_zero_point: u8,
    pub output: QuantParams,
    pub requant: Requant,
    /// Opt-out flag: when false every product of this layer stays exact.
    pub approximate: bool,
    /// Position among the model's multiplier-bearing layers. Assigned by [`QuantModel::new`].
    pub index: usize,
}

impl MacLayer {
    pub fn out_features(&self) -> usize {
        self.weights.shape()[0]
    }

    /// Number of weights feeding one output value.
    pub fn fan_in(&self) -> usize {
        self.weights.shape()[1..].iter().product()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv2d {
        mac: MacLayer,
        stride: usize,
        padding: usize,
    },
    Dense {
        mac: MacLayer,
    },
    Relu {
        zero_point: u8,
    },
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    AvgPool2d {
        kernel: usize,
        stride: usize,
    },
    Flatten,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::Dense { .. } => "dense",
            Layer::Relu { .. } => "relu",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::AvgPool2d { .. } => "avgpool2d",
            Layer::Flatten => "flatten",
        }
    }

    pub fn mac(&self) -> Option<&MacLayer> {
        match self {
            Layer::Conv2d { mac, .. } | Layer::Dense { mac } => Some(mac),
            _ => None,
        }
    }

    fn mac_mut(&mut self) -> Option<&mut MacLayer> {
        match self {
            Layer::Conv2d { mac, .. } | Layer::Dense { mac } => Some(mac),
            _ => None,
        }
    }

    /// Index among multiplier-bearing layers, if this layer carries weights.
    pub fn layer_index(&self) -> Option<usize> {
        self.mac().map(|m| m.index)
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2d { mac, stride, padding } => {
                let [c, h, w] = chw(input, "conv2d")?;
                let ws = mac.weights.shape();
                if ws.len() != 4 || ws[1] != c {
                    return Err(Error::Structure(format!(
                        "conv2d weights {ws:?} do not match input {input:?}"
                    )));
                }
                let (oh, ow) = window_out(h, w, ws[2], ws[3], *stride, *padding, "conv2d")?;
                Ok(vec![ws[0], oh, ow])
            }
            Layer::Dense { mac } => {
                let ws = mac.weights.shape();
                if input.len() != 1 || ws.len() != 2 || ws[1] != input[0] {
                    return Err(Error::Structure(format!(
                        "dense weights {ws:?} do not match input {input:?}"
                    )));
                }
                Ok(vec![ws[0]])
            }
            Layer::Relu { .. } => Ok(input.to_vec()),
            Layer::MaxPool2d { kernel, stride } | Layer::AvgPool2d { kernel, stride } => {
                let [c, h, w] = chw(input, self.kind())?;
                let (oh, ow) = window_out(h, w, *kernel, *kernel, *stride, 0, self.kind())?;
                Ok(vec![c, oh, ow])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

fn chw(input: &[usize], kind: &str) -> Result<[usize; 3]> {
    match input {
        &[c, h, w] => Ok([c, h, w]),
        _ => Err(Error::Structure(format!("{kind} expects a CHW input, got {input:?}"))),
    }
}

pub(crate) fn window_out(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    kind: &str,
) -> Result<(usize, usize)> {
    if stride == 0 || kh == 0 || kw == 0 {
        return Err(Error::Structure(format!("{kind}: stride and kernel must be positive")));
    }
    let (ph, pw) = (h + 2 * padding, w + 2 * padding);
    if kh > ph || kw > pw {
        return Err(Error::Structure(format!(
            "{kind}: kernel {kh}x{kw} larger than padded input {ph}x{pw}"
        )));
    }
    Ok(((ph - kh) / stride + 1, (pw - kw) / stride + 1))
}

/// A validated feed-forward quantized network operating on single CHW images.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantModel {
    pub name: String,
    input_shape: Vec<usize>,
    input_params: QuantParams,
    class_count: usize,
    layers: Vec<Layer>,
    /// `shapes[i]` is the input shape of layer `i`; the last entry is the output shape.
    shapes: Vec<Vec<usize>>,
    mac_positions: Vec<usize>,
}

impl QuantModel {
    pub fn new(
        name: impl Into<String>,
        input_shape: Vec<usize>,
        input_params: QuantParams,
        class_count: usize,
        mut layers: Vec<Layer>,
    ) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::Validation(format!(
                "class_count must be >= 2, got {class_count}"
            )));
        }
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Structure(format!("bad input shape {input_shape:?}")));
        }
        let mut shapes = vec![input_shape.clone()];
        let mut mac_positions = Vec::new();
        let mut zp = input_params.zero_point;
        for (pos, layer) in layers.iter_mut().enumerate() {
            let input = shapes.last().unwrap().clone();
            if let Some(mac) = layer.mac_mut() {
                mac.index = mac_positions.len();
                mac_positions.push(pos);
                if mac.bias.len() != mac.out_features() {
                    return Err(Error::Structure(format!(
                        "layer {pos}: bias length {} != {} outputs",
                        mac.bias.len(),
                        mac.out_features()
                    )));
                }
                if mac.input_zero_point != zp {
                    return Err(Error::Validation(format!(
                        "layer {pos}: input zero point {} but incoming activations use {zp}",
                        mac.input_zero_point
                    )));
                }
                zp = mac.output.zero_point;
            } else if let Layer::Relu { zero_point } = layer {
                if *zero_point != zp {
                    return Err(Error::Validation(format!(
                        "layer {pos}: relu zero point {zero_point} but activations use {zp}"
                    )));
                }
            }
            let out = layer
                .output_shape(&input)
                .map_err(|e| Error::Structure(format!("layer {pos}: {e}")))?;
            shapes.push(out);
        }
        let out = shapes.last().unwrap();
        if out.as_slice() != [class_count] {
            return Err(Error::Structure(format!(
                "model output {out:?} does not match class_count {class_count}"
            )));
        }
        Ok(Self {
            name: name.into(),
            input_shape,
            input_params,
            class_count,
            layers,
            shapes,
            mac_positions,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn input_params(&self) -> QuantParams {
        self.input_params
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Input shape of layer `pos`; `pos == layers().len()` gives the output shape.
    pub fn shape_before(&self, pos: usize) -> &[usize] {
        &self.shapes[pos]
    }

    /// Number of multiplier-bearing layers (L).
    pub fn mac_layer_count(&self) -> usize {
        self.mac_positions.len()
    }

    /// Multiplier-bearing layers in index order with their input and output shapes.
    pub fn mac_layers(&self) -> impl Iterator<Item = (&MacLayer, &[usize], &[usize])> + '_ {
        self.mac_positions.iter().map(move |&pos| {
            let mac = self.layers[pos].mac().expect("mac position");
            (mac, self.shapes[pos].as_slice(), self.shapes[pos + 1].as_slice())
        })
    }

    /// Multiplier-bearing layer `index` with its full layer record.
    pub fn mac_layer(&self, index: usize) -> Option<&Layer> {
        self.mac_positions.get(index).map(|&pos| &self.layers[pos])
    }

    /// How many products each individual weight of layer `index` takes part in per image.
    pub fn uses_per_weight(&self, index: usize) -> usize {
        let pos = self.mac_positions[index];
        match &self.layers[pos] {
            Layer::Conv2d { .. } => {
                let out = &self.shapes[pos + 1];
                out[1] * out[2]
            }
            _ => 1,
        }
    }
}
