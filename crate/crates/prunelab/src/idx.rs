//! The IDX container format for images and labels.
//!
//! Layout is the classic big-endian one: magic `0x00000803` then
//! `count, rows, cols` for images (unsigned bytes), magic `0x00000801`
//! then `count` for labels. Pixels load as rows scaled to `[0, 1]`.

use std::fs;
use std::path::Path;

use prunelab_core::dataset::{DatasetHandle, SplitTag, Targets};
use prunelab_core::Matrix;

use crate::error::DataError;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Decoded image stack: `count` images of `rows x cols` unsigned bytes.
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub count: usize,
}

fn read_u32_be(bytes: &[u8], at: usize, what: &'static str) -> Result<u32, DataError> {
    let slice = bytes
        .get(at..at + 4)
        .ok_or(DataError::Truncated { what })?;
    Ok(u32::from_be_bytes(slice.try_into().expect("4 bytes")))
}

/// Parses an IDX image payload.
pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages, DataError> {
    let magic = read_u32_be(bytes, 0, "image magic")?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            expected: IMAGES_MAGIC,
            actual: magic,
        });
    }
    let count = read_u32_be(bytes, 4, "image count")? as usize;
    let rows = read_u32_be(bytes, 8, "image rows")? as usize;
    let cols = read_u32_be(bytes, 12, "image cols")? as usize;
    let want = count
        .checked_mul(rows)
        .and_then(|x| x.checked_mul(cols))
        .ok_or(DataError::Malformed("image dims overflow".into()))?;
    let pixels = bytes
        .get(16..16 + want)
        .ok_or(DataError::Truncated { what: "image pixels" })?
        .to_vec();
    if bytes.len() != 16 + want {
        return Err(DataError::Malformed(format!(
            "{} trailing bytes after pixel data",
            bytes.len() - 16 - want
        )));
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels,
        count,
    })
}

/// Parses an IDX label payload.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    let magic = read_u32_be(bytes, 0, "label magic")?;
    if magic != LABELS_MAGIC {
        return Err(DataError::BadMagic {
            expected: LABELS_MAGIC,
            actual: magic,
        });
    }
    let count = read_u32_be(bytes, 4, "label count")? as usize;
    let labels = bytes
        .get(8..8 + count)
        .ok_or(DataError::Truncated { what: "labels" })?
        .to_vec();
    if bytes.len() != 8 + count {
        return Err(DataError::Malformed(format!(
            "{} trailing bytes after label data",
            bytes.len() - 8 - count
        )));
    }
    Ok(labels)
}

/// Loads an image/label file pair: pixels flattened to rows in `[0, 1]`,
/// labels as a 10-class target set.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<DatasetHandle, DataError> {
    let image_bytes = fs::read(images_path).map_err(|source| DataError::Io {
        path: images_path.to_path_buf(),
        source,
    })?;
    let label_bytes = fs::read(labels_path).map_err(|source| DataError::Io {
        path: labels_path.to_path_buf(),
        source,
    })?;
    let images = parse_idx_images(&image_bytes)?;
    let labels = parse_idx_labels(&label_bytes)?;
    if images.count != labels.len() {
        return Err(DataError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    let dim = images.rows * images.cols;
    let inputs = Matrix::from_fn(images.count, dim, |r, c| {
        f64::from(images.pixels[r * dim + c]) / 255.0
    });
    let classes = usize::from(labels.iter().copied().max().unwrap_or(0)) + 1;
    let handle = DatasetHandle::new(
        inputs,
        Targets::Labels {
            labels: labels.into_iter().map(usize::from).collect(),
            classes: classes.max(10),
        },
        SplitTag::Train,
        format!("idx({})", images_path.display()),
    )?;
    Ok(handle)
}

/// Writes images (pixel bytes, row-major per image) in IDX layout.
pub fn save_idx_images(
    path: &Path,
    rows: usize,
    cols: usize,
    pixels: &[u8],
) -> Result<(), DataError> {
    assert_eq!(pixels.len() % (rows * cols), 0, "partial image");
    let count = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes labels in IDX layout.
pub fn save_idx_labels(path: &Path, labels: &[u8]) -> Result<(), DataError> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}
