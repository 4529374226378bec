use std::path::Path;

use super::LabeledImage;
use crate::error::{Error, Result};

const IDX_IMAGES: u32 = 2051;
const IDX_LABELS: u32 = 2049;
const CIFAR_SIDE: usize = 32;
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(bytes.len(), format!("header truncated, need 4 bytes at {offset}")))
}

/// Parses an IDX image file and its matching label file.
pub fn parse_mnist_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Vec<LabeledImage>> {
    let magic = be_u32(image_bytes, 0)?;
    if magic != IDX_IMAGES {
        return Err(Error::format(0, format!("image magic {magic}, expected {IDX_IMAGES}")));
    }
    let count = be_u32(image_bytes, 4)? as usize;
    let rows = be_u32(image_bytes, 8)? as usize;
    let cols = be_u32(image_bytes, 12)? as usize;

    let label_magic = be_u32(label_bytes, 0)?;
    if label_magic != IDX_LABELS {
        return Err(Error::format(0, format!("label magic {label_magic}, expected {IDX_LABELS}")));
    }
    let label_count = be_u32(label_bytes, 4)? as usize;
    if label_count != count {
        return Err(Error::format(
            4,
            format!("label file holds {label_count} items, image file {count}"),
        ));
    }

    let plane = rows * cols;
    let need = 16 + count * plane;
    if image_bytes.len() < need {
        return Err(Error::format(
            image_bytes.len(),
            format!("image payload truncated, expected {need} bytes"),
        ));
    }
    if label_bytes.len() < 8 + count {
        return Err(Error::format(
            label_bytes.len(),
            format!("label payload truncated, expected {} bytes", 8 + count),
        ));
    }

    (0..count)
        .map(|i| {
            let px = &image_bytes[16 + i * plane..16 + (i + 1) * plane];
            LabeledImage::new(
                px.iter().map(|&b| b as f64).collect(),
                [1, rows, cols],
                label_bytes[8 + i] as usize,
                i,
            )
        })
        .collect()
}

/// Parses a CIFAR-10 binary batch.
pub fn parse_cifar10_bin(bytes: &[u8]) -> Result<Vec<LabeledImage>> {
    if bytes.len() % CIFAR_RECORD_LEN != 0 {
        let whole = bytes.len() / CIFAR_RECORD_LEN;
        return Err(Error::format(
            whole * CIFAR_RECORD_LEN,
            format!(
                "length {} is not a multiple of the {CIFAR_RECORD_LEN}-byte record",
                bytes.len()
            ),
        ));
    }
    bytes
        .chunks_exact(CIFAR_RECORD_LEN)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0] as usize;
            if label > 9 {
                return Err(Error::format(
                    i * CIFAR_RECORD_LEN,
                    format!("record {i} has label {label}"),
                ));
            }
            LabeledImage::new(
                rec[1..].iter().map(|&b| b as f64).collect(),
                [3, CIFAR_SIDE, CIFAR_SIDE],
                label,
                i,
            )
        })
        .collect()
}

fn to_byte(v: f64, what: &str) -> Result<u8> {
    if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
        return Err(Error::Data(format!("{what} value {v} is not a byte")));
    }
    Ok(v as u8)
}

fn to_label(label: usize) -> Result<u8> {
    u8::try_from(label).map_err(|_| Error::Data(format!("label {label} does not fit a byte")))
}

/// Encodes single-channel images as an (images, labels) IDX pair.
pub fn write_mnist_idx(images: &[LabeledImage]) -> Result<(Vec<u8>, Vec<u8>)> {
    let (rows, cols) = images.first().map_or((28, 28), |im| (im.height, im.width));
    let mut img = Vec::with_capacity(16 + images.len() * rows * cols);
    let mut lab = Vec::with_capacity(8 + images.len());
    for v in [IDX_IMAGES, images.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(&IDX_LABELS.to_be_bytes());
    lab.extend_from_slice(&(images.len() as u32).to_be_bytes());
    for im in images {
        if im.shape() != [1, rows, cols] {
            return Err(Error::dim("IDX image size", rows * cols, im.pixels.len()));
        }
        for &p in &im.pixels {
            img.push(to_byte(p, "pixel")?);
        }
        lab.push(to_label(im.label)?);
    }
    Ok((img, lab))
}

/// Encodes 3×32×32 images as a CIFAR-10 binary batch.
pub fn write_cifar10_bin(images: &[LabeledImage]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(images.len() * CIFAR_RECORD_LEN);
    for im in images {
        if im.shape() != [3, CIFAR_SIDE, CIFAR_SIDE] {
            return Err(Error::dim("CIFAR image size", CIFAR_RECORD_LEN - 1, im.pixels.len()));
        }
        if im.label > 9 {
            return Err(Error::Data(format!("CIFAR label {} out of range", im.label)));
        }
        out.push(im.label as u8);
        for &p in &im.pixels {
            out.push(to_byte(p, "pixel")?);
        }
    }
    Ok(out)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_mnist(images: &Path, labels: &Path) -> Result<Vec<LabeledImage>> {
    parse_mnist_idx(&read(images)?, &read(labels)?)
}

/// Loads and concatenates CIFAR batches; source indices continue across files.
pub fn load_cifar10(paths: &[impl AsRef<Path>]) -> Result<Vec<LabeledImage>> {
    let mut all = Vec::new();
    for p in paths {
        let offset = all.len();
        all.extend(parse_cifar10_bin(&read(p.as_ref())?)?.into_iter().map(|mut im| {
            im.source_index += offset;
            im
        }));
    }
    Ok(all)
}
