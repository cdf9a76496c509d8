//! Dataset ingestion and deterministic sampling.
//!
//! Supports the classic IDX container in two flavors: unsigned-byte images
//! with labels (the MNIST file pair), and a float32 matrix variant used for
//! synthetic feature datasets. All randomness is seeded.

use crate::error::{Error, Result};
use crate::nn::Batch;
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const IDX_MAGIC_U8_IMAGES: u32 = 2051;
pub const IDX_MAGIC_U8_LABELS: u32 = 2049;
/// IDX dtype 0x0D (float32), 2 dimensions.
pub const IDX_MAGIC_F32_MATRIX: u32 = 0x0000_0D02;

/// A labeled dataset; `inputs` is `len×dim` row-major.
#[derive(Clone, Debug)]
pub struct Dataset<S> {
    pub inputs: Vec<S>,
    pub labels: Vec<usize>,
    pub dim: usize,
    pub num_classes: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(inputs: Vec<S>, labels: Vec<usize>, dim: usize, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset must contain at least one example"));
        }
        if inputs.len() != labels.len() * dim {
            return Err(Error::shape(format!(
                "inputs length {} != {} examples x dim {}",
                inputs.len(),
                labels.len(),
                dim
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            inputs,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy the given example rows into a batch, in index order.
    pub fn gather(&self, indices: &[usize]) -> Batch<S> {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(&self.inputs[i * self.dim..(i + 1) * self.dim]);
            labels.push(self.labels[i]);
        }
        Batch {
            inputs,
            labels,
            input_dim: self.dim,
        }
    }

    /// New dataset containing the given rows, in index order.
    pub fn subset(&self, indices: &[usize]) -> Dataset<S> {
        let b = self.gather(indices);
        Dataset {
            inputs: b.inputs,
            labels: b.labels,
            dim: self.dim,
            num_classes: self.num_classes,
        }
    }
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::parse(
            bytes.len() as u64,
            format!("expected {} bytes, file has {}", end, bytes.len()),
        ));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Parse an MNIST-style IDX file pair: u8 images (magic 2051, dims n×r×c,
/// flattened and scaled by 1/255) plus u8 labels in 0..=9 (magic 2049).
pub fn parse_idx<S: Scalar>(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset<S>> {
    let magic = read_u32_be(image_bytes, 0)?;
    if magic != IDX_MAGIC_U8_IMAGES {
        return Err(Error::parse(
            0,
            format!("bad image magic {magic}, expected {IDX_MAGIC_U8_IMAGES}"),
        ));
    }
    let n = read_u32_be(image_bytes, 4)? as usize;
    let rows = read_u32_be(image_bytes, 8)? as usize;
    let cols = read_u32_be(image_bytes, 12)? as usize;
    let dim = rows * cols;
    let expected = 16 + n * dim;
    if image_bytes.len() != expected {
        return Err(Error::parse(
            image_bytes.len() as u64,
            format!(
                "image payload truncated: expected {expected} bytes, got {}",
                image_bytes.len()
            ),
        ));
    }

    let lmagic = read_u32_be(label_bytes, 0)?;
    if lmagic != IDX_MAGIC_U8_LABELS {
        return Err(Error::parse(
            0,
            format!("bad label magic {lmagic}, expected {IDX_MAGIC_U8_LABELS}"),
        ));
    }
    let ln = read_u32_be(label_bytes, 4)? as usize;
    if ln != n {
        return Err(Error::parse(
            4,
            format!("label count {ln} != image count {n}"),
        ));
    }
    let lexpected = 8 + n;
    if label_bytes.len() != lexpected {
        return Err(Error::parse(
            label_bytes.len() as u64,
            format!(
                "label payload truncated: expected {lexpected} bytes, got {}",
                label_bytes.len()
            ),
        ));
    }

    let scale = 1.0 / 255.0;
    let inputs = image_bytes[16..]
        .iter()
        .map(|&b| S::of_f64(b as f64 * scale))
        .collect();
    let mut labels = Vec::with_capacity(n);
    for (i, &b) in label_bytes[8..].iter().enumerate() {
        if b > 9 {
            return Err(Error::parse(
                (8 + i) as u64,
                format!("label {b} out of range 0..=9"),
            ));
        }
        labels.push(b as usize);
    }
    Dataset::new(inputs, labels, dim, 10)
}

/// Serialize u8 images into the IDX container (magic 2051).
pub fn write_idx_images(pixels: &[u8], n: usize, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if pixels.len() != n * rows * cols {
        return Err(Error::invalid(format!(
            "pixel count {} != {n}x{rows}x{cols}",
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IDX_MAGIC_U8_IMAGES.to_be_bytes());
    out.extend_from_slice(&(n as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Serialize u8 labels into the IDX container (magic 2049).
pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_MAGIC_U8_LABELS.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Serialize an n×d float32 matrix into the IDX container (dtype 0x0D, 2 dims,
/// big-endian payload). Used for synthetic feature datasets on disk.
pub fn write_idx_f32_matrix(values: &[f32], n: usize, dim: usize) -> Result<Vec<u8>> {
    if values.len() != n * dim {
        return Err(Error::invalid(format!(
            "value count {} != {n}x{dim}",
            values.len()
        )));
    }
    let mut out = Vec::with_capacity(12 + values.len() * 4);
    out.extend_from_slice(&IDX_MAGIC_F32_MATRIX.to_be_bytes());
    out.extend_from_slice(&(n as u32).to_be_bytes());
    out.extend_from_slice(&(dim as u32).to_be_bytes());
    for v in values {
        out.extend_from_slice(&v.to_be_bytes());
    }
    Ok(out)
}

/// Parse a float32 feature matrix (dtype 0x0D) plus a u8 label file into a
/// dataset with `num_classes = max label + 1`.
pub fn parse_idx_f32<S: Scalar>(feature_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset<S>> {
    let magic = read_u32_be(feature_bytes, 0)?;
    if magic != IDX_MAGIC_F32_MATRIX {
        return Err(Error::parse(
            0,
            format!("bad feature magic {magic:#x}, expected {IDX_MAGIC_F32_MATRIX:#x}"),
        ));
    }
    let n = read_u32_be(feature_bytes, 4)? as usize;
    let dim = read_u32_be(feature_bytes, 8)? as usize;
    let expected = 12 + n * dim * 4;
    if feature_bytes.len() != expected {
        return Err(Error::parse(
            feature_bytes.len() as u64,
            format!(
                "feature payload truncated: expected {expected} bytes, got {}",
                feature_bytes.len()
            ),
        ));
    }
    let lmagic = read_u32_be(label_bytes, 0)?;
    if lmagic != IDX_MAGIC_U8_LABELS {
        return Err(Error::parse(
            0,
            format!("bad label magic {lmagic}, expected {IDX_MAGIC_U8_LABELS}"),
        ));
    }
    let ln = read_u32_be(label_bytes, 4)? as usize;
    if ln != n {
        return Err(Error::parse(
            4,
            format!("label count {ln} != feature count {n}"),
        ));
    }
    if label_bytes.len() != 8 + n {
        return Err(Error::parse(
            label_bytes.len() as u64,
            format!(
                "label payload truncated: expected {} bytes, got {}",
                8 + n,
                label_bytes.len()
            ),
        ));
    }
    let mut inputs = Vec::with_capacity(n * dim);
    for chunk in feature_bytes[12..].chunks_exact(4) {
        inputs.push(S::of_f64(
            f32::from_be_bytes(chunk.try_into().unwrap()) as f64
        ));
    }
    let labels: Vec<usize> = label_bytes[8..].iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(inputs, labels, dim, num_classes)
}

/// k isotropic Gaussian clusters of `per_class` points each in d dimensions.
/// Cluster centers are standard normal draws fixed by the seed; points are
/// `center + spread·z`. Rows are class-major, so row `c·per_class + i` has
/// label `c`.
pub fn synth_blobs<S: Scalar>(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset<S>> {
    if num_classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::invalid("num_classes, per_class and dim must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let n = num_classes * per_class;
    let mut inputs = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..num_classes {
        let center: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
        for _ in 0..per_class {
            for &cj in &center {
                let z: f64 = normal.sample(&mut rng);
                inputs.push(S::of_f64(cj + spread * z));
            }
            labels.push(c);
        }
    }
    Dataset::new(inputs, labels, dim, num_classes)
}

/// Deterministic disjoint 9:1 split; the union of the parts is the input.
pub fn split_train_val<S: Scalar>(ds: &Dataset<S>, seed: u64) -> Result<(Dataset<S>, Dataset<S>)> {
    let n = ds.len();
    if n < 10 {
        return Err(Error::invalid(format!("need at least 10 examples, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_val = n / 10;
    let val = ds.subset(&idx[..n_val]);
    let train = ds.subset(&idx[n_val..]);
    Ok((train, val))
}

/// Without-replacement epoch sampler: each epoch is a fresh seeded shuffle of
/// all indices, consumed in batches of `batch_size` (the final short batch is
/// kept).
pub struct BatchSampler {
    order: Vec<usize>,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("sampler needs at least one example"));
        }
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        Ok(BatchSampler {
            order: (0..n).collect(),
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    /// Reshuffle and return the epoch's visiting order; iterate it in chunks
    /// of `batch_size()` to get the epoch's batches.
    pub fn next_epoch(&mut self) -> &[usize] {
        self.order.shuffle(&mut self.rng);
        &self.order
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }
}
