//! Heatmaps, colormaps, overlays, concentration metrics and stage reports.

pub mod heatmap;
pub mod image;
pub mod noise;
pub mod ppm;
pub mod report;

pub use heatmap::{aggregate, extract_heatmap, resize_heatmap, Aggregation, Heatmap};
pub use image::{colormap, grayscale, jet, overlay, RgbImage};
pub use noise::{decile_count, noise_metrics, NoiseMetrics};
pub use ppm::{decode_ppm, encode_ppm, read_ppm, write_ppm};
pub use report::{
    stage_report, StageReport, StageRun, PUBLISHED_STAGE_ACCURACY, STAGE_REPORT_HEADER,
};
