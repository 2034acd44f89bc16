//! Activation heatmaps: channel aggregation followed by min-max
//! normalization to [0, 1].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::resample::resize_forward;
use crate::ops::UpsampleMode;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// `(1/C) Σ_c |a_c|`
    #[default]
    MeanAbs,
    /// `max_c |a_c|`
    MaxAbs,
    /// One raw channel.
    Channel(usize),
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregation::MeanAbs => write!(f, "mean_abs"),
            Aggregation::MaxAbs => write!(f, "max_abs"),
            Aggregation::Channel(c) => write!(f, "channel_{c}"),
        }
    }
}

/// Row-major `height × width` values in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
    /// What was visualized, e.g. a tap name.
    pub source: String,
    pub aggregation: Aggregation,
}

impl Heatmap {
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }
}

/// The channel-aggregated map before normalization, in f64.
pub fn aggregate<T: Scalar>(activation: &Tensor<T>, aggregation: Aggregation) -> Result<Vec<f64>> {
    let (n, c, h, w) = activation.dims4("extract_heatmap")?;
    if n != 1 {
        return Err(Error::Usage(format!(
            "heatmaps take a single image, got a batch of {n}"
        )));
    }
    let plane = h * w;
    let value = |ch: usize, i: usize| {
        activation.data()[ch * plane + i]
            .to_f64()
            .unwrap_or(f64::NAN)
    };
    match aggregation {
        Aggregation::MeanAbs => Ok((0..plane)
            .map(|i| (0..c).map(|ch| value(ch, i).abs()).sum::<f64>() / c as f64)
            .collect()),
        Aggregation::MaxAbs => Ok((0..plane)
            .map(|i| (0..c).map(|ch| value(ch, i).abs()).fold(0.0, f64::max))
            .collect()),
        Aggregation::Channel(k) if k < c => Ok((0..plane).map(|i| value(k, i)).collect()),
        Aggregation::Channel(k) => Err(Error::Usage(format!(
            "channel {k} out of range for {c} channels"
        ))),
    }
}

/// Resolution of stored heatmap values, `2^-24` (f32 precision near 1).
const QUANTUM: f64 = 16_777_216.0;

/// Min-max normalization; a constant map becomes all zeros. Results are
/// rounded onto a fixed `2^-24` grid so the f64 rounding residue left near
/// the minimum cannot survive, which makes positive rescaling of the input
/// invisible in the output.
fn normalize(raw: &[f64]) -> Vec<f32> {
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    // Also taken when the range is NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(hi > lo) {
        return vec![0.0; raw.len()];
    }
    let range = hi - lo;
    raw.iter()
        .map(|&v| (((v - lo) / range) * QUANTUM).round() / QUANTUM)
        .map(|v| v as f32)
        .collect()
}

/// Aggregates a `[1, C, H, W]` activation over channels and normalizes.
/// The work is done in f64 and rounded once to f32.
pub fn extract_heatmap<T: Scalar>(
    activation: &Tensor<T>,
    aggregation: Aggregation,
    source: &str,
) -> Result<Heatmap> {
    let raw = aggregate(activation, aggregation)?;
    let shape = activation.shape();
    Ok(Heatmap {
        height: shape[2],
        width: shape[3],
        values: normalize(&raw),
        source: source.to_string(),
        aggregation,
    })
}

/// Bilinear resize (half-pixel centres) followed by a clamp to [0, 1].
pub fn resize_heatmap(h: &Heatmap, height: usize, width: usize) -> Result<Heatmap> {
    let src = Tensor::<f64>::new(
        vec![1, 1, h.height, h.width],
        h.values.iter().map(|&v| f64::from(v)).collect(),
    )?;
    let out = resize_forward(&src, height, width, UpsampleMode::Bilinear)?;
    Ok(Heatmap {
        height,
        width,
        values: out
            .data()
            .iter()
            .map(|&v| (v as f32).clamp(0.0, 1.0))
            .collect(),
        source: h.source.clone(),
        aggregation: h.aggregation,
    })
}
