//! Training-time augmentation on raw byte images.

use serde::{Deserialize, Serialize};

use crate::data::cifar::{CHANNELS, PIXELS, SIDE};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub flip: bool,
    /// Zero padding added on every side before a random 32×32 crop.
    pub pad_crop: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip: true,
            pad_crop: 4,
        }
    }
}

impl AugmentConfig {
    pub const NONE: AugmentConfig = AugmentConfig {
        flip: false,
        pad_crop: 0,
    };
}

/// Mirrors one planar image left to right.
pub fn flip_horizontal(image: &mut [u8]) {
    for row in image.chunks_exact_mut(SIDE) {
        row.reverse();
    }
}

/// The 32×32 window at offset `(dy, dx)` of the image zero-padded by `pad`.
pub fn pad_crop(image: &[u8], pad: usize, dy: usize, dx: usize) -> Vec<u8> {
    let mut out = vec![0u8; PIXELS];
    for c in 0..CHANNELS {
        let plane = &image[c * SIDE * SIDE..(c + 1) * SIDE * SIDE];
        for y in 0..SIDE {
            let sy = (y + dy).wrapping_sub(pad);
            if sy >= SIDE {
                continue;
            }
            for x in 0..SIDE {
                let sx = (x + dx).wrapping_sub(pad);
                if sx < SIDE {
                    out[(c * SIDE + y) * SIDE + x] = plane[sy * SIDE + sx];
                }
            }
        }
    }
    out
}

/// Augments a batch of planar images in place. For each image in order the
/// flip draw comes first (when enabled), then the vertical and horizontal
/// crop offsets (when `pad_crop > 0`).
pub fn augment(batch: &mut [u8], config: &AugmentConfig, rng: &mut Rng) {
    for image in batch.chunks_exact_mut(PIXELS) {
        if config.flip && rng.bernoulli(0.5) {
            flip_horizontal(image);
        }
        if config.pad_crop > 0 {
            let span = 2 * config.pad_crop + 1;
            let dy = rng.below(span);
            let dx = rng.below(span);
            let cropped = pad_crop(image, config.pad_crop, dy, dx);
            image.copy_from_slice(&cropped);
        }
    }
}
