//! RGB byte images, the jet colormap and alpha overlays.

use crate::data::SIDE;
use crate::error::{Error, Result};
use crate::viz::heatmap::Heatmap;

/// Row-major interleaved R, G, B bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::Usage(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        RgbImage {
            width,
            height,
            data: rgb.repeat(width * height),
        }
    }

    /// Converts a planar 3×32×32 CIFAR image.
    pub fn from_planar(planes: &[u8]) -> Self {
        let plane = SIDE * SIDE;
        let data = (0..plane)
            .flat_map(|i| [planes[i], planes[plane + i], planes[2 * plane + i]])
            .collect();
        RgbImage {
            width: SIDE,
            height: SIDE,
            data,
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Nearest-neighbour enlargement by an integer factor.
    pub fn scaled(&self, factor: usize) -> Self {
        let (w, h) = (self.width * factor, self.height * factor);
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                data.extend_from_slice(&self.pixel(x / factor, y / factor));
            }
        }
        RgbImage {
            width: w,
            height: h,
            data,
        }
    }

    /// Places images side by side, top-aligned, separated by `gap` columns
    /// of `background`.
    pub fn hstack(images: &[RgbImage], gap: usize, background: [u8; 3]) -> Self {
        let height = images.iter().map(|i| i.height).max().unwrap_or(0);
        let width =
            images.iter().map(|i| i.width).sum::<usize>() + gap * images.len().saturating_sub(1);
        let mut out = RgbImage::filled(width, height, background);
        let mut x0 = 0;
        for img in images {
            for y in 0..img.height {
                let src = &img.data[y * img.width * 3..(y + 1) * img.width * 3];
                let dst = (y * width + x0) * 3;
                out.data[dst..dst + src.len()].copy_from_slice(src);
            }
            x0 += img.width + gap;
        }
        out
    }
}

fn to_byte(c: f64) -> u8 {
    (255.0 * c).round() as u8
}

/// Jet palette: cold blue at 0 through green to warm red at 1.
pub fn jet(t: f64) -> [u8; 3] {
    let ch = |offset: f64| (1.5 - (4.0 * t - offset).abs()).clamp(0.0, 1.0);
    [to_byte(ch(3.0)), to_byte(ch(2.0)), to_byte(ch(1.0))]
}

pub fn colormap(h: &Heatmap) -> RgbImage {
    RgbImage {
        width: h.width,
        height: h.height,
        data: h.values.iter().flat_map(|&v| jet(f64::from(v))).collect(),
    }
}

/// Heatmap values as grey levels.
pub fn grayscale(h: &Heatmap) -> RgbImage {
    RgbImage {
        width: h.width,
        height: h.height,
        data: h
            .values
            .iter()
            .flat_map(|&v| [to_byte(f64::from(v)); 3])
            .collect(),
    }
}

/// `round((1 − alpha)·image + alpha·hm)` per byte.
pub fn overlay(image: &RgbImage, hm: &RgbImage, alpha: f64) -> Result<RgbImage> {
    if (image.width, image.height) != (hm.width, hm.height) {
        return Err(Error::Usage(format!(
            "overlay of a {}x{} heatmap on a {}x{} image",
            hm.width, hm.height, image.width, image.height
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Usage(format!("alpha {alpha} is outside [0, 1]")));
    }
    let data = image
        .data
        .iter()
        .zip(&hm.data)
        .map(|(&a, &b)| ((1.0 - alpha) * f64::from(a) + alpha * f64::from(b)).round() as u8)
        .collect();
    Ok(RgbImage {
        width: image.width,
        height: image.height,
        data,
    })
}
