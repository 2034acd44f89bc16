//! Byte images to normalized tensors.

use serde::{Deserialize, Serialize};

use crate::data::cifar::{Cifar10Dataset, CHANNELS, PIXELS, SIDE};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-channel mean and standard deviation of pixel values scaled to [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl ChannelStats {
    /// Statistics of the 50,000-image CIFAR-10 training split (population
    /// standard deviation over every pixel), frozen as the default.
    pub const CIFAR10: ChannelStats = ChannelStats {
        mean: [0.4914, 0.4822, 0.4465],
        std: [0.2470, 0.2435, 0.2616],
    };

    /// Normalized value of every byte, per channel, evaluated once in f64.
    fn table<T: Scalar>(&self) -> [[T; 256]; 3] {
        let mut t = [[T::zero(); 256]; 3];
        for (c, row) in t.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = T::from_f64_lossy((b as f64 / 255.0 - self.mean[c]) / self.std[c]);
            }
        }
        t
    }
}

impl Default for ChannelStats {
    fn default() -> Self {
        Self::CIFAR10
    }
}

/// Recomputes channel statistics over a dataset, accumulating exactly in
/// integers before the final division.
pub fn compute_channel_stats(data: &Cifar10Dataset) -> ChannelStats {
    let plane = SIDE * SIDE;
    let mut sum = [0u64; 3];
    let mut sq = [0u64; 3];
    for i in 0..data.len() {
        for (c, p) in data.image(i).chunks_exact(plane).enumerate() {
            for &b in p {
                sum[c] += u64::from(b);
                sq[c] += u64::from(b) * u64::from(b);
            }
        }
    }
    let count = (data.len() * plane) as f64;
    let mut stats = ChannelStats {
        mean: [0.0; 3],
        std: [1.0; 3],
    };
    if count == 0.0 {
        return stats;
    }
    for c in 0..3 {
        let mean = sum[c] as f64 / count;
        let var = (sq[c] as f64 / count - mean * mean).max(0.0);
        stats.mean[c] = mean / 255.0;
        stats.std[c] = var.sqrt() / 255.0;
    }
    stats
}

/// Converts `N × 3 × 32 × 32` planar bytes to a normalized NCHW tensor:
/// `(byte / 255 − mean_c) / std_c`.
pub fn preprocess<T: Scalar>(images: &[u8], stats: &ChannelStats) -> Tensor<T> {
    assert_eq!(images.len() % PIXELS, 0, "whole images only");
    let table = stats.table::<T>();
    let plane = SIDE * SIDE;
    let data = images
        .iter()
        .enumerate()
        .map(|(i, &b)| table[(i / plane) % CHANNELS][b as usize])
        .collect();
    Tensor::from_parts(vec![images.len() / PIXELS, CHANNELS, SIDE, SIDE], data)
}
