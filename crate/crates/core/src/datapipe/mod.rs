//! Dataset parsing, deterministic stratified subsets, normalization and flip
//! augmentation.
//!
//! Pixels are kept as raw bytes after parsing; batches are materialized on
//! demand with the byte-to-`[-1, 1]` map `p / 127.5 - 1`.

mod augment;
mod cifar;
mod folder;
mod idx;
mod montage;
mod subset;

use serde::{Deserialize, Serialize};

pub use augment::{augment, AugmentPolicy};
pub use cifar::{load_cifar10_binary, parse_cifar10_binary, CIFAR_RECORD_LEN};
pub use folder::load_image_folder;
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use montage::{montage, write_montage_png};
pub use subset::{split_validation, stratified_subset, stratified_subset_of};

use crate::error::{Error, Result};
use crate::netspec::ImageShape;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Seed of the fixed validation hold-out.
pub const VALIDATION_SEED: u64 = 0x5EED_0005_0000;

#[inline]
pub fn normalize_pixel<T: Scalar>(p: u8) -> T {
    T::lit(p as f64 / 127.5 - 1.0)
}

#[inline]
pub fn denormalize_pixel<T: Scalar>(x: T) -> u8 {
    ((x.as_f64() + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Real,
    Generated,
}

/// A fully parsed labelled image set, pixels stored as bytes in HWC order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub shape: ImageShape,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pixels: Vec<u8>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        shape: ImageShape,
        num_classes: usize,
        pixels: Vec<u8>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        if pixels.len() != n * shape.numel() {
            return Err(Error::Shape(format!(
                "{} pixel bytes for {n} images of {:?}",
                pixels.len(),
                shape
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label: l,
                num_classes,
            });
        }
        Ok(Dataset {
            name: name.into(),
            shape,
            num_classes,
            class_names: (0..num_classes).map(|c| c.to_string()).collect(),
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image_bytes(&self, i: usize) -> &[u8] {
        let w = self.shape.numel();
        &self.pixels[i * w..(i + 1) * w]
    }

    pub fn class_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &i in indices {
            h[self.labels[i]] += 1;
        }
        h
    }

    /// Normalized images `[n, H, W, C]` for the given indices.
    pub fn images<T: Scalar>(&self, indices: &[usize]) -> Tensor<T> {
        let w = self.shape.numel();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend(self.image_bytes(i).iter().map(|&p| normalize_pixel::<T>(p)));
        }
        let s = &self.shape;
        Tensor::new(&[indices.len(), s.height, s.width, s.channels], data)
            .expect("image batch shape")
    }

    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> LabeledImageBatch<T> {
        LabeledImageBatch {
            images: self.images(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            source: SourceTag::Real,
        }
    }

    /// Appends another dataset with identical geometry and classes.
    pub fn extend(&mut self, other: Dataset) -> Result<()> {
        if other.shape != self.shape || other.num_classes != self.num_classes {
            return Err(Error::Shape(
                "cannot merge datasets with different geometry".into(),
            ));
        }
        self.pixels.extend(other.pixels);
        self.labels.extend(other.labels);
        Ok(())
    }
}

/// A deterministic subset of a parent dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSlice {
    pub name: String,
    pub split: Split,
    /// Sorted, unique indices into the parent.
    pub indices: Vec<usize>,
    pub class_histogram: Vec<usize>,
}

impl DatasetSlice {
    pub fn full(ds: &Dataset, split: Split) -> Self {
        let indices: Vec<usize> = (0..ds.len()).collect();
        DatasetSlice {
            name: ds.name.clone(),
            split,
            class_histogram: ds.class_histogram(&indices),
            indices,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Normalized images with labels, as fed to a network.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageBatch<T> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub source: SourceTag,
}

impl<T: Scalar> LabeledImageBatch<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
