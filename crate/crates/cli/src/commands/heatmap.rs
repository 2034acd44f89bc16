use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use attnviz::data::{Split, PIXELS, SIDE};
use attnviz::viz::{read_ppm, RgbImage};
use attnviz::StagePlacement;

use crate::config::RunConfig;
use crate::failure::Failure;
use crate::render::{activations, heatmap_of, write_triplet, HeatmapEntry};
use crate::session::{create_dir, load_network, load_split};

pub const HEATMAP_DIR: &str = "heatmap";
pub const HEATMAP_JSON: &str = "heatmap.json";

pub enum ImageSource<'a> {
    TestIndex(usize),
    File(&'a Path),
}

/// Planar bytes of a 32×32 P6 image.
fn planar_from_ppm(path: &Path) -> Result<Vec<u8>, Failure> {
    let img = read_ppm(path).map_err(Failure::data)?;
    if (img.width, img.height) != (SIDE, SIDE) {
        return Err(Failure::Data(format!(
            "{}: expected a {SIDE}x{SIDE} image, got {}x{}",
            path.display(),
            img.width,
            img.height
        )));
    }
    let plane = SIDE * SIDE;
    let mut out = vec![0u8; PIXELS];
    for (i, px) in img.data.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = px[c];
        }
    }
    Ok(out)
}

/// Renders every requested tap, plus the mask and the masked features when
/// the model has attention, into `out/heatmap/`.
pub fn run(
    cfg: &RunConfig,
    checkpoint: &Path,
    source: ImageSource,
    taps: &[StagePlacement],
) -> Result<(), Failure> {
    cfg.echo(&cfg.out)?;
    let net = load_network(cfg, checkpoint)?;
    let (image, label) = match source {
        ImageSource::TestIndex(i) => {
            let test = load_split(cfg, Split::Test)?;
            if i >= test.len() {
                return Err(Failure::Config(format!(
                    "image index {i} is out of range for {} test images",
                    test.len()
                )));
            }
            (test.image(i).to_vec(), Some(test.label(i)))
        }
        ImageSource::File(p) => (planar_from_ppm(p)?, None),
    };
    let dir = cfg.out.join(HEATMAP_DIR);
    create_dir(&dir)?;
    let original = RgbImage::from_planar(&image);
    let viz = &cfg.viz;
    let record = activations(
        &net,
        &image,
        &cfg.data.normalization,
        &taps.iter().copied().collect(),
    )?;
    let size = (SIDE, SIDE);

    let mut entries: BTreeMap<String, HeatmapEntry> = BTreeMap::new();
    for (stage, act) in &record.taps {
        let r = heatmap_of(act, viz.aggregation, &stage.to_string(), size)?;
        let name = stage.to_string();
        entries.insert(
            name.clone(),
            write_triplet(&dir, &name, &r, &original, viz.alpha, viz.scale, None)?,
        );
    }
    if let Some(att) = &record.attention {
        let mask = heatmap_of(
            &att.mask,
            viz.aggregation,
            &format!("{} mask", att.stage),
            size,
        )?;
        entries.insert(
            "mask".into(),
            write_triplet(
                &dir,
                "mask",
                &mask,
                &original,
                viz.alpha,
                viz.scale,
                Some(&att.mask),
            )?,
        );
        let attended = heatmap_of(
            &att.attended,
            viz.aggregation,
            &format!("{} masked features", att.stage),
            size,
        )?;
        entries.insert(
            "attended".into(),
            write_triplet(
                &dir,
                "attended",
                &attended,
                &original,
                viz.alpha,
                viz.scale,
                Some(&att.mask),
            )?,
        );
    }
    let summary = serde_json::json!({
        "label": label,
        "heatmaps": entries,
    });
    let path = dir.join(HEATMAP_JSON);
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Failure::io(&path, e))?;
    println!("wrote {} heatmaps to {}", entries.len(), dir.display());
    Ok(())
}
