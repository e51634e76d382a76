//! Labelled image sets: the raw `AXDS` container and IDX (MNIST) pairs.

use std::fs;
use std::path::Path;

use super::model::QuantModel;
use super::tensor::{QuantParams, QuantTensor};
use crate::error::{Error, Result};

const AXDS_MAGIC: &[u8; 4] = b"AXDS";

/// A batch of images with leading dimension equal to the label count.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: QuantTensor,
    pub labels: Vec<u32>,
}

impl Batch {
    pub fn new(images: QuantTensor, labels: Vec<u32>) -> Result<Self> {
        if images.shape()[0] != labels.len() {
            return Err(Error::Structure(format!(
                "batch has {} images but {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Raw uint8 images stored back to back, plus labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    image_len: usize,
    class_count: usize,
    images: Vec<u8>,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn new(image_len: usize, class_count: usize, images: Vec<u8>, labels: Vec<u32>) -> Result<Self> {
        if image_len == 0 || images.len() != image_len * labels.len() {
            return Err(Error::Structure(format!(
                "{} image bytes do not hold {} images of {image_len} bytes",
                images.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= class_count) {
            return Err(Error::Validation(format!("label {bad} outside {class_count} classes")));
        }
        Ok(Self {
            image_len,
            class_count,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.image_len
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * self.image_len..(i + 1) * self.image_len]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// First `count` images.
    pub fn prefix(&self, count: usize) -> Dataset {
        let count = count.min(self.len());
        Dataset {
            image_len: self.image_len,
            class_count: self.class_count,
            images: self.images[..count * self.image_len].to_vec(),
            labels: self.labels[..count].to_vec(),
        }
    }

    /// Splits into consecutive batches shaped for `model`; the last batch may be short.
    pub fn batches(&self, model: &QuantModel, batch_size: usize) -> Result<Vec<Batch>> {
        if batch_size == 0 {
            return Err(Error::Argument("batch size must be positive".into()));
        }
        if self.image_len != model.input_len() {
            return Err(Error::Structure(format!(
                "dataset images have {} bytes, model input {:?} needs {}",
                self.image_len,
                model.input_shape(),
                model.input_len()
            )));
        }
        if self.class_count > model.class_count() {
            return Err(Error::Structure(format!(
                "dataset has {} classes, model only {}",
                self.class_count,
                model.class_count()
            )));
        }
        let params: QuantParams = model.input_params();
        (0..self.len())
            .step_by(batch_size)
            .map(|start| {
                let end = (start + batch_size).min(self.len());
                let mut shape = vec![end - start];
                shape.extend_from_slice(model.input_shape());
                let images = QuantTensor::new(
                    shape,
                    self.images[start * self.image_len..end * self.image_len].to_vec(),
                    params,
                )?;
                Batch::new(images, self.labels[start..end].to_vec())
            })
            .collect()
    }

    pub fn to_axds_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.images.len() + self.labels.len());
        out.extend_from_slice(AXDS_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.image_len as u32).to_le_bytes());
        out.extend_from_slice(&(self.class_count as u32).to_le_bytes());
        out.extend_from_slice(&self.images);
        out.extend(self.labels.iter().map(|&l| l as u8));
        out
    }

    pub fn from_axds_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != AXDS_MAGIC {
            return Err(Error::Format("missing AXDS header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (count, image_len, class_count) = (word(4), word(8), word(12));
        let expected = count
            .checked_mul(image_len)
            .and_then(|n| n.checked_add(16 + count))
            .ok_or_else(|| Error::Format("AXDS header sizes overflow".into()))?;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "AXDS payload is {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let split = 16 + count * image_len;
        let images = bytes[16..split].to_vec();
        let labels = bytes[split..].iter().map(|&l| l as u32).collect();
        Dataset::new(image_len, class_count, images, labels)
    }

    pub fn load_axds(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_axds_bytes(&fs::read(path)?)
    }

    pub fn save_axds(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_axds_bytes())?;
        Ok(())
    }

    /// Builds a dataset from IDX image (type 0x08, rank >= 2) and label (rank 1) files.
    pub fn from_idx_bytes(images: &[u8], labels: &[u8]) -> Result<Self> {
        let (img_dims, img_data) = parse_idx(images)?;
        let (lbl_dims, lbl_data) = parse_idx(labels)?;
        if img_dims.len() < 2 || lbl_dims.len() != 1 || img_dims[0] != lbl_dims[0] {
            return Err(Error::Format(format!(
                "IDX dims mismatch: images {img_dims:?}, labels {lbl_dims:?}"
            )));
        }
        let image_len = img_dims[1..].iter().product();
        let labels: Vec<u32> = lbl_data.iter().map(|&l| l as u32).collect();
        let class_count = labels.iter().max().map_or(2, |&m| (m as usize + 1).max(2));
        Dataset::new(image_len, class_count, img_data.to_vec(), labels)
    }

    pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        Self::from_idx_bytes(&fs::read(images)?, &fs::read(labels)?)
    }
}

fn parse_idx(bytes: &[u8]) -> Result<(Vec<usize>, &[u8])> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format("missing IDX magic".into()));
    }
    if bytes[2] != 0x08 {
        return Err(Error::Format(format!("IDX element type {:#04x} is not u8", bytes[2])));
    }
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if rank == 0 || bytes.len() < header {
        return Err(Error::Format("truncated IDX header".into()));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let n: usize = dims.iter().product();
    if bytes.len() != header + n {
        return Err(Error::Format(format!(
            "IDX payload is {} bytes, dims {dims:?} imply {n}",
            bytes.len() - header
        )));
    }
    Ok((dims, &bytes[header..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(dims: &[u32], data: &[u8]) -> Vec<u8> {
        let mut v = vec![0, 0, 0x08, dims.len() as u8];
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v.extend_from_slice(data);
        v
    }

    #[test]
    fn idx_pair_loads() {
        let images = idx(&[2, 2, 2], &[1, 2, 3, 4, 5, 6, 7, 8]);
        let labels = idx(&[2], &[3, 1]);
        let ds = Dataset::from_idx_bytes(&images, &labels).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.image(1), &[5, 6, 7, 8]);
        assert_eq!(ds.labels(), &[3, 1]);
        assert_eq!(ds.class_count(), 4);
    }

    #[test]
    fn idx_rejects_bad_type_and_length() {
        let mut images = idx(&[1, 2], &[1, 2]);
        images[2] = 0x0D;
        assert!(Dataset::from_idx_bytes(&images, &idx(&[1], &[0])).is_err());
        let short = idx(&[1, 3], &[1, 2]);
        assert!(Dataset::from_idx_bytes(&short, &idx(&[1], &[0])).is_err());
    }

    #[test]
    fn axds_rejects_truncation() {
        let ds = Dataset::new(3, 2, vec![1, 2, 3, 4, 5, 6], vec![0, 1]).unwrap();
        let bytes = ds.to_axds_bytes();
        assert_eq!(Dataset::from_axds_bytes(&bytes).unwrap(), ds);
        assert!(Dataset::from_axds_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Dataset::from_axds_bytes(&bad).is_err());
    }

    #[test]
    fn labels_out_of_range_rejected() {
        assert!(Dataset::new(1, 2, vec![0, 0], vec![0, 2]).is_err());
    }
}
