//! Scalar summaries of how concentrated a heatmap is.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::viz::heatmap::Heatmap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseMetrics {
    /// Shannon entropy in nats of the heatmap treated as a distribution.
    pub entropy: f64,
    /// Share of total mass held by the largest ⌈HW/10⌉ cells.
    pub top_decile_energy: f64,
    pub mask_mean: Option<f64>,
    /// The heatmap sums to zero: entropy is that of the uniform
    /// distribution and `top_decile_energy` is reported as 0.
    pub undefined: bool,
}

/// Number of cells in the top decile, `⌈n / 10⌉`.
pub fn decile_count(n: usize) -> usize {
    n.div_ceil(10)
}

pub fn noise_metrics<T: Scalar>(h: &Heatmap, mask: Option<&Tensor<T>>) -> NoiseMetrics {
    let values: Vec<f64> = h.values.iter().map(|&v| f64::from(v)).collect();
    let n = values.len();
    let ln_n = (n as f64).ln();
    let total: f64 = values.iter().sum();
    let mask_mean = mask.map(|m| {
        m.data()
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN))
            .sum::<f64>()
            / m.numel() as f64
    });
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(total > 0.0) {
        return NoiseMetrics {
            entropy: ln_n,
            top_decile_energy: 0.0,
            mask_mean,
            undefined: true,
        };
    }
    let entropy = -values
        .iter()
        .map(|&v| v / total)
        .filter(|&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>();
    let mut sorted = values;
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let top: f64 = sorted[..decile_count(n)].iter().sum();
    NoiseMetrics {
        entropy: entropy.clamp(0.0, ln_n),
        top_decile_energy: (top / total).clamp(0.0, 1.0),
        mask_mean,
        undefined: false,
    }
}
