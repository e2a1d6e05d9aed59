//! Experiment inputs: the noisy unit sphere and handwritten digits stored
//! in IDX containers.

use std::fs;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder};
use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IdxError, Result};
use crate::pca::Dataset;
use crate::stiefel::sample_unit_sphere;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Points on the unit sphere in R³ with isotropic Gaussian noise.
#[derive(Debug, Clone)]
pub struct SphereSample {
    /// Uncentered noisy points, one per row.
    pub raw: DMatrix<f64>,
    pub data: Dataset,
}

pub fn generate_sphere<R: Rng + ?Sized>(
    n: usize,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<SphereSample> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::InvalidParameter {
            name: "noise",
            value: noise_sigma,
            reason: "must be finite and nonnegative",
        });
    }
    let mut raw = DMatrix::zeros(n, 3);
    for i in 0..n {
        let u = sample_unit_sphere(3, rng);
        for k in 0..3 {
            raw[(i, k)] = u[k] + noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let data = Dataset::center(&raw)?;
    Ok(SphereSample { raw, data })
}

/// Grey-level images, row-major pixels, with one label per image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImageSet {
    pub rows: usize,
    pub cols: usize,
    /// `n · rows · cols` bytes, image after image.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawImageSet {
    pub fn new(images: IdxImages, labels: Vec<u8>) -> Result<Self> {
        if images.count != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} labels", images.count),
                found: format!("{}", labels.len()),
            });
        }
        Ok(RawImageSet {
            rows: images.rows,
            cols: images.cols,
            pixels: images.pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[i * size..(i + 1) * size]
    }
}

/// Decoded image container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_field(bytes: &[u8], offset: usize) -> std::result::Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(BigEndian::read_u32)
        .ok_or(IdxError::Truncated {
            offset,
            needed: 4,
            available: bytes.len().saturating_sub(offset),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> std::result::Result<(), IdxError> {
    let found = read_field(bytes, 0)?;
    if found != expected {
        return Err(IdxError::BadMagic {
            offset: 0,
            expected,
            found,
        });
    }
    Ok(())
}

fn dimension(bytes: &[u8], offset: usize) -> std::result::Result<usize, IdxError> {
    let v = read_field(bytes, offset)?;
    usize::try_from(v).map_err(|_| IdxError::DimensionOverflow { offset })
}

fn check_payload(bytes: &[u8], header: usize, needed: usize) -> std::result::Result<(), IdxError> {
    let available = bytes.len() - header;
    if available < needed {
        return Err(IdxError::Truncated {
            offset: header,
            needed,
            available,
        });
    }
    if available > needed {
        return Err(IdxError::TrailingBytes {
            offset: header + needed,
            extra: available - needed,
        });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> std::result::Result<IdxImages, IdxError> {
    check_magic(bytes, IDX_IMAGE_MAGIC)?;
    let count = dimension(bytes, 4)?;
    let rows = dimension(bytes, 8)?;
    let cols = dimension(bytes, 12)?;
    for (offset, v) in [(8, rows), (12, cols)] {
        if v == 0 {
            return Err(IdxError::ZeroDimension { offset });
        }
    }
    let size = rows
        .checked_mul(cols)
        .ok_or(IdxError::DimensionOverflow { offset: 12 })?;
    let total = count
        .checked_mul(size)
        .ok_or(IdxError::DimensionOverflow { offset: 4 })?;
    check_payload(bytes, 16, total)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> std::result::Result<Vec<u8>, IdxError> {
    check_magic(bytes, IDX_LABEL_MAGIC)?;
    let count = dimension(bytes, 4)?;
    check_payload(bytes, 8, count)?;
    Ok(bytes[8..].to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = vec![0u8; 16];
    BigEndian::write_u32(&mut out[0..4], IDX_IMAGE_MAGIC);
    BigEndian::write_u32(&mut out[4..8], images.count as u32);
    BigEndian::write_u32(&mut out[8..12], images.rows as u32);
    BigEndian::write_u32(&mut out[12..16], images.cols as u32);
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; 8];
    BigEndian::write_u32(&mut out[0..4], IDX_LABEL_MAGIC);
    BigEndian::write_u32(&mut out[4..8], labels.len() as u32);
    out.extend_from_slice(labels);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    Ok(parse_idx_images(&read_file(path.as_ref())?)?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    Ok(parse_idx_labels(&read_file(path.as_ref())?)?)
}

/// Loads an image file and its label file into one set.
pub fn load_image_set(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<RawImageSet> {
    RawImageSet::new(load_idx_images(images)?, load_idx_labels(labels)?)
}

/// How [`subsample_images`] reduces each `factor × factor` block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Keep the top-left pixel of each block.
    #[default]
    Stride,
    /// Rounded block average.
    Mean,
}

pub fn subsample_images(set: &RawImageSet, factor: usize, pooling: Pooling) -> Result<RawImageSet> {
    if factor == 0 || !set.rows.is_multiple_of(factor) || !set.cols.is_multiple_of(factor) {
        return Err(Error::InvalidDimensions(format!(
            "subsampling factor {factor} must divide {}x{}",
            set.rows, set.cols
        )));
    }
    let (rows, cols) = (set.rows / factor, set.cols / factor);
    let mut pixels = Vec::with_capacity(set.len() * rows * cols);
    for i in 0..set.len() {
        let img = set.image(i);
        for r in 0..rows {
            for c in 0..cols {
                let v = match pooling {
                    Pooling::Stride => img[factor * r * set.cols + factor * c],
                    Pooling::Mean => {
                        let mut sum = 0u32;
                        for dr in 0..factor {
                            for dc in 0..factor {
                                sum += img[(factor * r + dr) * set.cols + factor * c + dc] as u32;
                            }
                        }
                        let k = (factor * factor) as u32;
                        ((sum + k / 2) / k) as u8
                    }
                };
                pixels.push(v);
            }
        }
    }
    Ok(RawImageSet {
        rows,
        cols,
        pixels,
        labels: set.labels.clone(),
    })
}

/// Draws `per_class` images of each class without replacement, then
/// shuffles the combined selection.
pub fn select_digit_subset<R: Rng + ?Sized>(
    set: &RawImageSet,
    classes: &[u8],
    per_class: usize,
    rng: &mut R,
) -> Result<RawImageSet> {
    let mut chosen = Vec::with_capacity(classes.len() * per_class);
    for &class in classes {
        let pool: Vec<usize> = (0..set.len()).filter(|&i| set.labels[i] == class).collect();
        if pool.len() < per_class {
            return Err(Error::InsufficientInstances {
                class,
                available: pool.len(),
                requested: per_class,
            });
        }
        chosen.extend(
            index::sample(rng, pool.len(), per_class)
                .iter()
                .map(|k| pool[k]),
        );
    }
    chosen.shuffle(rng);
    let size = set.rows * set.cols;
    let mut pixels = Vec::with_capacity(chosen.len() * size);
    for &i in &chosen {
        pixels.extend_from_slice(set.image(i));
    }
    Ok(RawImageSet {
        rows: set.rows,
        cols: set.cols,
        pixels,
        labels: chosen.iter().map(|&i| set.labels[i]).collect(),
    })
}

/// Row-major pixels scaled to `[0, 1]`, centered, labels attached.
pub fn to_dataset(set: &RawImageSet) -> Result<Dataset> {
    if set.is_empty() {
        return Err(Error::EmptyInput);
    }
    let p = set.rows * set.cols;
    let raw =
        DMatrix::from_row_iterator(set.len(), p, set.pixels.iter().map(|&v| v as f64 / 255.0));
    Dataset::center(&raw)?.with_labels(set.labels.clone())
}
