//! Datasets: IDX ingestion, one-hot labels, seeded minibatching and small
//! synthetic generators.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Class count of MNIST and FashionMNIST.
pub const MNIST_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One sample per row.
    pub images: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(images: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::Inconsistent(format!(
                "{} samples but {} labels",
                images.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.cols()
    }

    /// The first `n` samples (or all of them, if there are fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn one_hot(&self) -> Matrix {
        one_hot(&self.labels, self.num_classes).expect("labels validated on construction")
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            expected: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Parses an IDX image file; returns pixels scaled to `[0, 1]`, one image per
/// row.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Matrix> {
    check_magic(bytes, IDX_IMAGES_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let d = rows * cols;
    let payload = &bytes[16..];
    if payload.len() < n * d {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: n * d,
            found: payload.len(),
        });
    }
    let data = payload[..n * d].iter().map(|&b| b as f64 / 255.0).collect();
    Matrix::from_vec(n, d, data)
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: n,
            found: payload.len(),
        });
    }
    Ok(payload[..n].to_vec())
}

/// Loads an IDX image/label pair (optionally gzipped) with MNIST's ten
/// classes.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    load_idx_with_classes(images_path, labels_path, MNIST_CLASSES)
}

pub fn load_idx_with_classes(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    num_classes: usize,
) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = parse_idx_images(&read_maybe_gz(ip)?, ip)?;
    let labels = parse_idx_labels(&read_maybe_gz(lp)?, lp)?;
    if images.rows() != labels.len() {
        return Err(Error::Inconsistent(format!(
            "{} holds {} images but {} holds {} labels",
            ip.display(),
            images.rows(),
            lp.display(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
        return Err(Error::InvalidArgument(format!(
            "{}: label {bad} out of range for {num_classes} classes",
            lp.display()
        )));
    }
    Dataset::new(images, labels.into_iter().map(usize::from).collect(), num_classes)
}

/// Serializes images as an IDX3 file. `rows * cols` must equal the image
/// dimension; pixels are rounded back to bytes.
pub fn idx_images_bytes(images: &Matrix, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if rows * cols != images.cols() {
        return Err(Error::dim("idx_images_bytes", images.cols(), rows * cols));
    }
    let mut out = Vec::with_capacity(16 + images.as_slice().len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.rows() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend(images.as_slice().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    Ok(out)
}

pub fn idx_labels_bytes(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l)
            .map_err(|_| Error::InvalidArgument(format!("label {l} does not fit in a byte")))?;
        out.push(b);
    }
    Ok(out)
}

pub fn write_idx(
    ds: &Dataset,
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    fs::write(ip, idx_images_bytes(&ds.images, rows, cols)?).map_err(|e| Error::io(ip, e))?;
    fs::write(lp, idx_labels_bytes(&ds.labels)?).map_err(|e| Error::io(lp, e))?;
    Ok(())
}

pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(labels.len(), num_classes);
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        m[(i, l)] = 1.0;
    }
    Ok(m)
}

/// Row indices of each minibatch of an epoch. The permutation depends only on
/// `(seed, epoch)`; the short remainder is dropped.
pub fn batch_indices(n: usize, m: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("batch size must be at least 2, got {m}")));
    }
    if m > n {
        return Err(Error::InvalidArgument(format!(
            "batch size {m} exceeds dataset size {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    Ok(perm.chunks_exact(m).map(|c| c.to_vec()).collect())
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub x: Matrix,
    pub y_onehot: Matrix,
}

pub fn batches(ds: &Dataset, m: usize, seed: u64, epoch: u64) -> Result<Vec<Batch>> {
    batch_indices(ds.len(), m, seed, epoch)?
        .into_iter()
        .map(|indices| {
            let labels: Vec<usize> = indices.iter().map(|&i| ds.labels[i]).collect();
            Ok(Batch {
                x: ds.images.select_rows(&indices),
                y_onehot: one_hot(&labels, ds.num_classes)?,
                indices,
            })
        })
        .collect()
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).expect("finite samples")
}

/// Two independent standard-normal `n x d` matrices.
pub fn independent_pair(n: usize, d: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = normal_matrix(n, d, &mut rng);
    let b = normal_matrix(n, d, &mut rng);
    (a, b)
}

/// `(Z, Z + noise·E)` with `Z`, `E` standard normal.
pub fn dependent_pair(n: usize, d: usize, noise: f64, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = normal_matrix(n, d, &mut rng);
    let e = normal_matrix(n, d, &mut rng);
    let mut w = z.clone();
    w.axpy(noise, &e);
    (z, w)
}

/// Gaussian clusters, one per class, rescaled so every feature lies in
/// `[0, 1]`. Class centers are `separation` apart along distinct axes
/// (cycled when there are more classes than dimensions).
pub fn blobs(n: usize, d: usize, num_classes: usize, separation: f64, spread: f64, seed: u64) -> Result<Dataset> {
    if n < 2 || d == 0 || num_classes < 2 {
        return Err(Error::InvalidArgument(
            "blobs needs n >= 2, d >= 1 and at least 2 classes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    let mut x = normal_matrix(n, d, &mut rng).scale(spread);
    for (i, &l) in labels.iter().enumerate() {
        let axis = l % d;
        let sign = if (l / d) % 2 == 0 { 1.0 } else { -1.0 };
        x[(i, axis)] += sign * separation;
    }
    let total = x.as_slice().len();
    let (lo, hi) = x
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    debug_assert!(total > 0);
    let range = (hi - lo).max(f64::MIN_POSITIVE);
    let images = x.map(|v| (v - lo) / range);
    Dataset::new(images, labels, num_classes)
}
