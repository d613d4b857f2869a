//! Big-endian IDX files (`0x00000803` images, `0x00000801` labels),
//! optionally gzip-compressed.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ndarray::Array2;

use super::{Dataset, Split};
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated { path: path.to_path_buf(), expected: offset + 4, found: bytes.len() })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic { path: path.to_path_buf(), expected, found });
    }
    Ok(())
}

/// Load an image/label IDX pair. Pixels are scaled to `[0, 1]`; the class
/// count is `max(label) + 1`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_maybe_gz(ip)?;
    let labels = read_maybe_gz(lp)?;

    check_magic(&images, IMAGE_MAGIC, ip)?;
    let n = be_u32(&images, 4, ip)? as usize;
    let rows = be_u32(&images, 8, ip)? as usize;
    let cols = be_u32(&images, 12, ip)? as usize;
    let payload = n * rows * cols;
    if images.len() - 16 < payload {
        return Err(Error::Truncated { path: ip.to_path_buf(), expected: payload, found: images.len() - 16 });
    }

    check_magic(&labels, LABEL_MAGIC, lp)?;
    let n_labels = be_u32(&labels, 4, lp)? as usize;
    if labels.len() - 8 < n_labels {
        return Err(Error::Truncated { path: lp.to_path_buf(), expected: n_labels, found: labels.len() - 8 });
    }
    if n != n_labels {
        return Err(Error::CountMismatch { images: n, labels: n_labels });
    }

    let features = Array2::from_shape_fn((n, rows * cols), |(i, j)| images[16 + i * rows * cols + j] as f64 / 255.0);
    let labels: Vec<usize> = labels[8..8 + n].iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().copied().max().map_or(0, |m| m + 1);
    let ds = Dataset::new(features, labels, class_count, split)?;
    if rows == cols {
        ds.with_image_side(rows)
    } else {
        Ok(ds)
    }
}

/// Write an image dataset back to IDX (gzip-compressed when the path ends in `.gz`).
/// Pixels are stored as `round(255·x)`.
pub fn write_idx(ds: &Dataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let side = ds.image_side.ok_or_else(|| Error::InvalidArgument("dataset is not image-shaped".into()))?;
    if ds.class_count > 256 {
        return Err(Error::InvalidArgument("IDX labels are single bytes".into()));
    }
    let mut img = Vec::with_capacity(16 + ds.features.len());
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    img.extend_from_slice(&(side as u32).to_be_bytes());
    img.extend_from_slice(&(side as u32).to_be_bytes());
    img.extend(ds.features.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    lab.extend(ds.labels.iter().map(|&l| l as u8));
    write_maybe_gz(images_path.as_ref(), &img)?;
    write_maybe_gz(labels_path.as_ref(), &lab)
}

fn write_maybe_gz(path: &Path, bytes: &[u8]) -> Result<()> {
    let data = if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes.to_vec()
    };
    fs::write(path, data).map_err(|e| Error::io(path, e))
}
