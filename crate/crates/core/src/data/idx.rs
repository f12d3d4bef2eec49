//! IDX (MNIST) image and label files: big-endian u32 magic and dimensions
//! followed by raw unsigned bytes.

use std::fs;
use std::path::Path;

use super::ImageDataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                needed: self.pos + n,
                available: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32_be(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let found = self.u32_be()?;
        if found != expected {
            return Err(Error::BadMagic {
                path: self.path.to_path_buf(),
                expected,
                found,
            });
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an image/label file pair; intensities are `byte / 255`, classes = max label + 1 (at least 10).
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<ImageDataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let bytes = read(images_path)?;
    let mut r = Reader {
        path: images_path,
        bytes: &bytes,
        pos: 0,
    };
    r.magic(IMAGES_MAGIC)?;
    let n = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let images: Vec<f64> = r.take(n * rows * cols)?.iter().map(|&b| b as f64 / 255.0).collect();

    let bytes = read(labels_path)?;
    let mut r = Reader {
        path: labels_path,
        bytes: &bytes,
        pos: 0,
    };
    r.magic(LABELS_MAGIC)?;
    let m = r.u32_be()? as usize;
    if m != n {
        return Err(Error::CountMismatch { images: n, labels: m });
    }
    let labels: Vec<usize> = r.take(m)?.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().max().map_or(10, |&m| (m + 1).max(10));

    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ImageDataset::new(name, "", rows, cols, images, labels, classes)
}

pub fn write_idx_images(path: impl AsRef<Path>, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// 2x2 average pooling (28x28 -> 14x14); odd trailing rows/columns are dropped.
pub fn downsample_2x(ds: &ImageDataset) -> ImageDataset {
    let (h, w) = (ds.height / 2, ds.width / 2);
    let mut images = Vec::with_capacity(ds.len() * h * w);
    for i in 0..ds.len() {
        let img = ds.image(i);
        for y in 0..h {
            for x in 0..w {
                let at = |dy: usize, dx: usize| img[(2 * y + dy) * ds.width + 2 * x + dx];
                images.push((at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0);
            }
        }
    }
    ImageDataset {
        height: h,
        width: w,
        images,
        ..ds.clone()
    }
}
