use std::sync::atomic::{AtomicU64, Ordering};

use super::dataset::Batch;
use super::model::{window_out, Layer, MacLayer, QuantModel};
use super::tensor::QuantTensor;
use crate::error::{Error, Result};

/// Source of every weight x activation product computed by the engine.
///
/// Operands are the stored uint8 weight and the uint8 activation; `layer` is
/// the multiplier-bearing layer index.
pub trait Multiplier: Sync {
    fn product(&self, layer: usize, weight: u8, activation: u8) -> u16;
}

impl<M: Multiplier + ?Sized> Multiplier for &M {
    #[inline]
    fn product(&self, layer: usize, weight: u8, activation: u8) -> u16 {
        (**self).product(layer, weight, activation)
    }
}

/// The exact 8x8 product.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactMultiplier;

impl Multiplier for ExactMultiplier {
    #[inline]
    fn product(&self, _layer: usize, weight: u8, activation: u8) -> u16 {
        weight as u16 * activation as u16
    }
}

/// Wraps a multiplier and counts calls per layer.
pub struct Instrumented<M> {
    inner: M,
    counts: Vec<AtomicU64>,
}

impl<M: Multiplier> Instrumented<M> {
    pub fn new(inner: M, layers: usize) -> Self {
        Self {
            inner,
            counts: (0..layers).map(|_| AtomicU64::new(0)).collect(),
        }
    }

    pub fn counts(&self) -> Vec<u64> {
        self.counts.iter().map(|c| c.load(Ordering::Relaxed)).collect()
    }
}

impl<M: Multiplier> Multiplier for Instrumented<M> {
    fn product(&self, layer: usize, weight: u8, activation: u8) -> u16 {
        self.counts[layer].fetch_add(1, Ordering::Relaxed);
        self.inner.product(layer, weight, activation)
    }
}

fn finish_accumulator(mac: &MacLayer, raw: i64, sum_a: i64, sum_w: i64, bias: i32) -> Result<u8> {
    let k = mac.fan_in() as i64;
    let a_zp = mac.input_zero_point as i64;
    let w_zp = mac.weights.zero_point() as i64;
    let acc = raw - a_zp * sum_w - w_zp * sum_a + k * w_zp * a_zp + bias as i64;
    for v in [raw, acc] {
        if i32::try_from(v).is_err() {
            return Err(Error::Overflow {
                layer: mac.index,
                value: v,
            });
        }
    }
    let q = mac.requant.apply(acc) + mac.output.zero_point as i64;
    Ok(q.clamp(0, 255) as u8)
}

/// Quantized 2-D convolution over a CHW tensor.
///
/// Padded positions hold the input zero point and still go through `mul`.
pub fn conv2d_q<M: Multiplier + ?Sized>(input: &QuantTensor, layer: &Layer, mul: &M) -> Result<QuantTensor> {
    let Layer::Conv2d { mac, stride, padding } = layer else {
        return Err(Error::Argument(format!("conv2d_q called on {}", layer.kind())));
    };
    let out_shape = layer.output_shape(input.shape())?;
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let ws = mac.weights.shape();
    let (oc, kh, kw) = (ws[0], ws[2], ws[3]);
    let (oh, ow) = window_out(h, w, kh, kw, *stride, *padding, "conv2d")?;
    let k = c * kh * kw;
    let x = input.values();
    let weights = mac.weights.values();
    let pad_value = mac.input_zero_point;
    let mut out = Vec::with_capacity(oc * oh * ow);
    for o in 0..oc {
        let wrow = &weights[o * k..(o + 1) * k];
        let sum_w: i64 = wrow.iter().map(|&v| v as i64).sum();
        for oy in 0..oh {
            for ox in 0..ow {
                let mut raw = 0i64;
                let mut sum_a = 0i64;
                let mut wi = 0;
                for ch in 0..c {
                    let plane = &x[ch * h * w..(ch + 1) * h * w];
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - *padding as isize;
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - *padding as isize;
                            let a = if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                plane[iy as usize * w + ix as usize]
                            } else {
                                pad_value
                            };
                            raw += mul.product(mac.index, wrow[wi], a) as i64;
                            sum_a += a as i64;
                            wi += 1;
                        }
                    }
                }
                out.push(finish_accumulator(mac, raw, sum_a, sum_w, mac.bias[o])?);
            }
        }
    }
    QuantTensor::new(out_shape, out, mac.output)
}

/// Quantized fully-connected layer over a 1-D tensor.
pub fn dense_q<M: Multiplier + ?Sized>(input: &QuantTensor, layer: &Layer, mul: &M) -> Result<QuantTensor> {
    let Layer::Dense { mac } = layer else {
        return Err(Error::Argument(format!("dense_q called on {}", layer.kind())));
    };
    let out_shape = layer.output_shape(input.shape())?;
    let k = mac.fan_in();
    let x = input.values();
    let sum_a: i64 = x.iter().map(|&v| v as i64).sum();
    let weights = mac.weights.values();
    let mut out = Vec::with_capacity(mac.out_features());
    for o in 0..mac.out_features() {
        let wrow = &weights[o * k..(o + 1) * k];
        let mut raw = 0i64;
        let mut sum_w = 0i64;
        for (&wv, &a) in wrow.iter().zip(x) {
            raw += mul.product(mac.index, wv, a) as i64;
            sum_w += wv as i64;
        }
        out.push(finish_accumulator(mac, raw, sum_a, sum_w, mac.bias[o])?);
    }
    QuantTensor::new(out_shape, out, mac.output)
}

fn pool(input: &QuantTensor, kernel: usize, stride: usize, average: bool) -> Result<QuantTensor> {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = window_out(h, w, kernel, kernel, stride, 0, "pool")?;
    let x = input.values();
    let n = (kernel * kernel) as u32;
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let window = (0..kernel).flat_map(|ky| {
                    let row = (oy * stride + ky) * w + ox * stride;
                    plane[row..row + kernel].iter().copied()
                });
                let v = if average {
                    let sum: u32 = window.map(u32::from).sum();
                    // half away from zero on a non-negative sum
                    ((2 * sum + n) / (2 * n)) as u8
                } else {
                    window.max().unwrap_or(0)
                };
                out.push(v);
            }
        }
    }
    QuantTensor::new(vec![c, oh, ow], out, input.params())
}

fn apply_layer<M: Multiplier + ?Sized>(x: QuantTensor, layer: &Layer, mul: &M) -> Result<QuantTensor> {
    match layer {
        Layer::Conv2d { .. } => conv2d_q(&x, layer, mul),
        Layer::Dense { .. } => dense_q(&x, layer, mul),
        Layer::Relu { zero_point } => {
            let shape = x.shape().to_vec();
            let params = x.params();
            let values = x.into_values().into_iter().map(|v| v.max(*zero_point)).collect();
            QuantTensor::new(shape, values, params)
        }
        Layer::MaxPool2d { kernel, stride } => pool(&x, *kernel, *stride, false),
        Layer::AvgPool2d { kernel, stride } => pool(&x, *kernel, *stride, true),
        Layer::Flatten => {
            let len = x.len();
            x.reshaped(vec![len])
        }
    }
}

/// Runs one image through the model and returns the output activations.
pub fn forward<M: Multiplier + ?Sized>(model: &QuantModel, image: &[u8], mul: &M) -> Result<QuantTensor> {
    if image.len() != model.input_len() {
        return Err(Error::Structure(format!(
            "image has {} values, model expects {:?}",
            image.len(),
            model.input_shape()
        )));
    }
    let mut x = QuantTensor::new(model.input_shape().to_vec(), image.to_vec(), model.input_params())?;
    for layer in model.layers() {
        x = apply_layer(x, layer, mul)?;
    }
    Ok(x)
}

/// Index of the largest output; ties resolve to the lowest class.
pub fn predict<M: Multiplier + ?Sized>(model: &QuantModel, image: &[u8], mul: &M) -> Result<usize> {
    let out = forward(model, image, mul)?;
    let values = out.values();
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Number of correctly classified images in the batch.
pub fn correct_count<M: Multiplier + ?Sized>(model: &QuantModel, batch: &Batch, mul: &M) -> Result<usize> {
    let dims = batch.images.shape();
    if &dims[1..] != model.input_shape() {
        return Err(Error::Structure(format!(
            "batch images {dims:?} do not match model input {:?}",
            model.input_shape()
        )));
    }
    let len = model.input_len();
    let mut correct = 0;
    for (image, &label) in batch.images.values().chunks_exact(len).zip(&batch.labels) {
        if predict(model, image, mul)? == label as usize {
            correct += 1;
        }
    }
    Ok(correct)
}

/// Fraction of correctly classified images in the batch.
pub fn infer_batch<M: Multiplier + ?Sized>(model: &QuantModel, batch: &Batch, mul: &M) -> Result<f64> {
    let correct = correct_count(model, batch, mul)?;
    Ok(correct as f64 / batch.len() as f64)
}

/// Products executed per image by each multiplier-bearing layer.
pub fn count_multiplications(model: &QuantModel) -> Vec<u64> {
    model
        .mac_layers()
        .map(|(mac, _, out)| {
            let outputs: usize = out.iter().product();
            (outputs * mac.fan_in()) as u64
        })
        .collect()
}
