//! CIFAR-10 binary batches: each record is one label byte followed by the
//! red, green and blue 32×32 planes, row-major.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const PIXELS: usize = CHANNELS * SIDE * SIDE;
pub const RECORD_BYTES: usize = PIXELS + 1;
pub const NUM_CLASSES: usize = 10;

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Images as raw bytes, `N × 3 × 32 × 32`, with one label per image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cifar10Dataset {
    images: Vec<u8>,
    labels: Vec<u8>,
    split: Split,
}

impl Cifar10Dataset {
    pub fn new(images: Vec<u8>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if images.len() != labels.len() * PIXELS {
            return Err(Error::Input(format!(
                "{} labels need {} image bytes, got {}",
                labels.len(),
                labels.len() * PIXELS,
                images.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
            return Err(Error::Input(format!(
                "label {} of image {i} is out of range",
                labels[i]
            )));
        }
        Ok(Cifar10Dataset {
            images,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn images(&self) -> &[u8] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Planar bytes of image `i`.
    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * PIXELS..(i + 1) * PIXELS]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// Byte at channel `c`, row `y`, column `x` of image `i`.
    pub fn pixel(&self, i: usize, c: usize, y: usize, x: usize) -> u8 {
        self.images[i * PIXELS + (c * SIDE + y) * SIDE + x]
    }

    /// The first `n` images (all of them when `n >= len`).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Cifar10Dataset {
            images: self.images[..n * PIXELS].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }

    /// Serializes in the binary batch format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * RECORD_BYTES);
        for i in 0..self.len() {
            out.push(self.labels[i]);
            out.extend_from_slice(self.image(i));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Parses one batch file's contents. `path` only labels errors.
pub fn parse_records(bytes: &[u8], path: &Path, split: Split) -> Result<Cifar10Dataset> {
    let whole = bytes.len() - bytes.len() % RECORD_BYTES;
    if whole != bytes.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: whole as u64,
            detail: format!(
                "length {} is not a multiple of {RECORD_BYTES}; trailing partial record",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / RECORD_BYTES;
    let mut images = Vec::with_capacity(n * PIXELS);
    let mut labels = Vec::with_capacity(n);
    for (i, record) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        if record[0] as usize >= NUM_CLASSES {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: (i * RECORD_BYTES) as u64,
                detail: format!("label {} is not below {NUM_CLASSES}", record[0]),
            });
        }
        labels.push(record[0]);
        images.extend_from_slice(&record[1..]);
    }
    Ok(Cifar10Dataset {
        images,
        labels,
        split,
    })
}

/// Concatenates the records of `paths` in order.
pub fn load_cifar10<P: AsRef<Path>>(paths: &[P], split: Split) -> Result<Cifar10Dataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let part = parse_records(&bytes, path, split)?;
        images.extend(part.images);
        labels.extend(part.labels);
    }
    Ok(Cifar10Dataset {
        images,
        labels,
        split,
    })
}

/// The standard file names of a split inside an extracted
/// `cifar-10-batches-bin` directory.
pub fn split_files(dir: &Path, split: Split) -> Vec<PathBuf> {
    match split {
        Split::Train => TRAIN_FILES.iter().map(|f| dir.join(f)).collect(),
        Split::Test => vec![dir.join(TEST_FILE)],
    }
}
