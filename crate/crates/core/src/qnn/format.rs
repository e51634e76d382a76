//! The `AXQM` model container.
//!
//! Layout: magic `AXQM`, version (u32 LE), manifest length in bytes (u32 LE),
//! UTF-8 JSON manifest, then the blob section. Blob offsets in the manifest are
//! relative to the start of the blob section; weights are raw u8, biases i32 LE.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{Layer, MacLayer, QuantModel, Requant};
use super::tensor::{QuantParams, QuantTensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"AXQM";
pub const AXQM_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    name: String,
    input_shape: Vec<usize>,
    input_scale: f64,
    input_zero_point: u8,
    class_count: usize,
    layers: Vec<LayerEntry>,
}

#[derive(Serialize, Deserialize)]
struct WeightEntry {
    shape: Vec<usize>,
    scale: f64,
    zero_point: u8,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct BiasEntry {
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct MacEntry {
    weight: WeightEntry,
    bias: BiasEntry,
    input_zero_point: u8,
    output: QuantParams,
    requant: Requant,
    #[serde(default = "default_true")]
    approximate: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LayerEntry {
    Conv2d {
        #[serde(flatten)]
        mac: MacEntry,
        stride: usize,
        padding: usize,
    },
    Dense {
        #[serde(flatten)]
        mac: MacEntry,
    },
    Relu {
        zero_point: u8,
    },
    Maxpool2d {
        kernel: usize,
        stride: usize,
    },
    Avgpool2d {
        kernel: usize,
        stride: usize,
    },
    Flatten,
}

fn blob<'a>(blobs: &'a [u8], offset: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    offset
        .checked_add(len)
        .and_then(|end| blobs.get(offset..end))
        .ok_or_else(|| Error::Format(format!("{what} blob {offset}+{len} outside blob section")))
}

fn mac_from_entry(e: MacEntry, blobs: &[u8]) -> Result<MacLayer> {
    let w = blob(blobs, e.weight.offset, e.weight.len, "weight")?;
    let weights = QuantTensor::new(
        e.weight.shape,
        w.to_vec(),
        QuantParams::new(e.weight.scale, e.weight.zero_point)?,
    )?;
    let b = blob(blobs, e.bias.offset, e.bias.len * 4, "bias")?;
    let bias = b
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(MacLayer {
        weights,
        bias,
        input_zero_point: e.input_zero_point,
        output: QuantParams::new(e.output.scale, e.output.zero_point)?,
        requant: Requant::new(e.requant.multiplier, e.requant.shift)?,
        approximate: e.approximate,
        index: 0,
    })
}

fn mac_to_entry(mac: &MacLayer, blobs: &mut Vec<u8>) -> MacEntry {
    let w_off = blobs.len();
    blobs.extend_from_slice(mac.weights.values());
    let b_off = blobs.len();
    for b in &mac.bias {
        blobs.extend_from_slice(&b.to_le_bytes());
    }
    MacEntry {
        weight: WeightEntry {
            shape: mac.weights.shape().to_vec(),
            scale: mac.weights.scale(),
            zero_point: mac.weights.zero_point(),
            offset: w_off,
            len: mac.weights.len(),
        },
        bias: BiasEntry {
            offset: b_off,
            len: mac.bias.len(),
        },
        input_zero_point: mac.input_zero_point,
        output: mac.output,
        requant: mac.requant,
        approximate: mac.approximate,
    }
}

impl QuantModel {
    pub fn from_axqm_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing AXQM header".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != AXQM_VERSION {
            return Err(Error::Format(format!("unsupported AXQM version {version}")));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let manifest_bytes = bytes
            .get(12..12 + len)
            .ok_or_else(|| Error::Format("truncated AXQM manifest".into()))?;
        let text = std::str::from_utf8(manifest_bytes)
            .map_err(|e| Error::Format(format!("AXQM manifest is not UTF-8: {e}")))?;
        let manifest: Manifest =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("AXQM manifest: {e}")))?;
        let blobs = &bytes[12 + len..];
        let layers = manifest
            .layers
            .into_iter()
            .map(|entry| {
                Ok(match entry {
                    LayerEntry::Conv2d { mac, stride, padding } => Layer::Conv2d {
                        mac: mac_from_entry(mac, blobs)?,
                        stride,
                        padding,
                    },
                    LayerEntry::Dense { mac } => Layer::Dense {
                        mac: mac_from_entry(mac, blobs)?,
                    },
                    LayerEntry::Relu { zero_point } => Layer::Relu { zero_point },
                    LayerEntry::Maxpool2d { kernel, stride } => Layer::MaxPool2d { kernel, stride },
                    LayerEntry::Avgpool2d { kernel, stride } => Layer::AvgPool2d { kernel, stride },
                    LayerEntry::Flatten => Layer::Flatten,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        QuantModel::new(
            manifest.name,
            manifest.input_shape,
            QuantParams::new(manifest.input_scale, manifest.input_zero_point)?,
            manifest.class_count,
            layers,
        )
    }

    pub fn to_axqm_bytes(&self) -> Vec<u8> {
        let mut blobs = Vec::new();
        let layers = self
            .layers()
            .iter()
            .map(|layer| match layer {
                Layer::Conv2d { mac, stride, padding } => LayerEntry::Conv2d {
                    mac: mac_to_entry(mac, &mut blobs),
                    stride: *stride,
                    padding: *padding,
                },
                Layer::Dense { mac } => LayerEntry::Dense {
                    mac: mac_to_entry(mac, &mut blobs),
                },
                Layer::Relu { zero_point } => LayerEntry::Relu {
                    zero_point: *zero_point,
                },
                Layer::MaxPool2d { kernel, stride } => LayerEntry::Maxpool2d {
                    kernel: *kernel,
                    stride: *stride,
                },
                Layer::AvgPool2d { kernel, stride } => LayerEntry::Avgpool2d {
                    kernel: *kernel,
                    stride: *stride,
                },
                Layer::Flatten => LayerEntry::Flatten,
            })
            .collect();
        let manifest = Manifest {
            name: self.name.clone(),
            input_shape: self.input_shape().to_vec(),
            input_scale: self.input_params().scale,
            input_zero_point: self.input_params().zero_point,
            class_count: self.class_count(),
            layers,
        };
        let text = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(12 + text.len() + blobs.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&AXQM_VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(&text);
        out.extend_from_slice(&blobs);
        out
    }

    pub fn load_axqm(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_axqm_bytes(&fs::read(path)?)
    }

    pub fn save_axqm(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_axqm_bytes())?;
        Ok(())
    }

    /// SHA-256 of the canonical AXQM serialization, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_axqm_bytes()))
    }
}
