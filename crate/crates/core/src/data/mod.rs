//! Dataset parsing, two-class task construction and standardization.

mod formats;
mod synthetic;
mod task;

pub use formats::{
    load_cifar10, load_mnist, parse_cifar10_bin, parse_mnist_idx, write_cifar10_bin,
    write_mnist_idx, CIFAR_RECORD_LEN,
};
pub use synthetic::{synthetic_images, synthetic_task, SyntheticSpec};
pub use task::{build_task, DatasetSpec, Standardizer, TaskDataset};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// One image with its class id and its position in the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    /// Channel-major, `channels * height * width` values.
    pub pixels: Vec<f64>,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub label: usize,
    pub source_index: usize,
}

impl LabeledImage {
    pub fn new(
        pixels: Vec<f64>,
        [channels, height, width]: [usize; 3],
        label: usize,
        source_index: usize,
    ) -> Result<Self> {
        let want = channels * height * width;
        if pixels.len() != want {
            return Err(Error::dim("pixel count", want, pixels.len()));
        }
        Ok(LabeledImage {
            pixels,
            channels,
            height,
            width,
            label,
            source_index,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

/// Stacks images into an `[N, C, H, W]` tensor.
pub fn batch_tensor(images: &[&LabeledImage]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Usage("cannot batch zero images".into()))?;
    let shape = first.shape();
    let mut data = Vec::with_capacity(images.len() * first.pixels.len());
    for img in images {
        if img.shape() != shape {
            return Err(Error::dim("image size", first.pixels.len(), img.pixels.len()));
        }
        data.extend_from_slice(&img.pixels);
    }
    Tensor::new(vec![images.len(), shape[0], shape[1], shape[2]], data)
}
