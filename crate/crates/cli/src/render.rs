//! Turning one image's activations into heatmap files.

use std::collections::BTreeSet;
use std::path::Path;

use attnviz::data::{preprocess, ChannelStats};
use attnviz::nn::ActivationRecord;
use attnviz::viz::{
    colormap, extract_heatmap, grayscale, noise_metrics, overlay, resize_heatmap, write_ppm,
    Aggregation, Heatmap, NoiseMetrics, RgbImage,
};
use attnviz::{Network32, StagePlacement, Tensor32};
use serde::Serialize;

use crate::failure::Failure;

/// Forward pass of one planar 3×32×32 image.
pub fn activations(
    net: &Network32,
    image: &[u8],
    stats: &ChannelStats,
    taps: &BTreeSet<StagePlacement>,
) -> Result<ActivationRecord<f32>, Failure> {
    let x = preprocess::<f32>(image, stats);
    Ok(net.forward_with_taps(&x, taps)?.1)
}

/// A heatmap at its native resolution and resized to the image.
pub struct Rendered {
    pub native: Heatmap,
    pub full: Heatmap,
}

pub fn heatmap_of(
    activation: &Tensor32,
    aggregation: Aggregation,
    source: &str,
    size: (usize, usize),
) -> Result<Rendered, Failure> {
    let native = extract_heatmap(activation, aggregation, source)?;
    let full = resize_heatmap(&native, size.1, size.0)?;
    Ok(Rendered { native, full })
}

#[derive(Debug, Serialize)]
pub struct HeatmapEntry {
    pub source: String,
    pub aggregation: String,
    /// `[height, width]` before resizing to the image.
    pub native_size: [usize; 2],
    pub metrics: NoiseMetrics,
    pub files: Vec<String>,
}

/// Writes `{name}_raw.ppm`, `{name}_color.ppm` and `{name}_overlay.ppm`.
pub fn write_triplet(
    dir: &Path,
    name: &str,
    rendered: &Rendered,
    original: &RgbImage,
    alpha: f64,
    scale: usize,
    mask: Option<&Tensor32>,
) -> Result<HeatmapEntry, Failure> {
    let color = colormap(&rendered.full);
    let images = [
        ("raw", grayscale(&rendered.full)),
        ("overlay", overlay(original, &color, alpha)?),
        ("color", color),
    ];
    let mut files = Vec::new();
    for (kind, img) in &images {
        let file = format!("{name}_{kind}.ppm");
        write_ppm(&img.scaled(scale), &dir.join(&file))?;
        files.push(file);
    }
    files.sort();
    Ok(HeatmapEntry {
        source: rendered.full.source.clone(),
        aggregation: rendered.full.aggregation.to_string(),
        native_size: [rendered.native.height, rendered.native.width],
        metrics: noise_metrics(&rendered.full, mask),
        files,
    })
}
