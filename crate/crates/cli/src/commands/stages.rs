use std::collections::BTreeSet;
use std::fs;

use attnviz::data::{Split, SIDE};
use attnviz::nn::{AttentionModuleSpec, AttentionPlacement};
use attnviz::viz::{
    colormap, noise_metrics, overlay, stage_report, write_ppm, NoiseMetrics, RgbImage, StageRun,
};
use attnviz::StagePlacement;
use serde::Serialize;

use crate::config::RunConfig;
use crate::failure::Failure;
use crate::render::{activations, heatmap_of};
use crate::session::{create_dir, run_training, TrainedRun};

pub const STAGES_DIR: &str = "stages";
pub const STRIPS_DIR: &str = "strips";
pub const REPORT_CSV: &str = "stage_report.csv";
pub const REPORT_TXT: &str = "stage_report.txt";
pub const REPORT_JSON: &str = "stage_report.json";
pub const STRIP_INDEX: &str = "index.json";

/// The run config for attention at `stage`; everything else is shared.
fn stage_config(base: &RunConfig, stage: StagePlacement) -> RunConfig {
    let mut cfg = base.clone();
    let module = base
        .model
        .attention
        .as_ref()
        .map_or_else(AttentionModuleSpec::default, |a| a.module.clone());
    cfg.model.attention = Some(AttentionPlacement { stage, module });
    cfg.train.stage = None;
    cfg.out = base.out.join(STAGES_DIR).join(stage.to_string());
    cfg
}

fn mean_metrics(all: &[NoiseMetrics]) -> NoiseMetrics {
    let n = all.len().max(1) as f64;
    let masks: Vec<f64> = all.iter().filter_map(|m| m.mask_mean).collect();
    NoiseMetrics {
        entropy: all.iter().map(|m| m.entropy).sum::<f64>() / n,
        top_decile_energy: all.iter().map(|m| m.top_decile_energy).sum::<f64>() / n,
        mask_mean: (!masks.is_empty()).then(|| masks.iter().sum::<f64>() / masks.len() as f64),
        undefined: all.iter().any(|m| m.undefined),
    }
}

#[derive(Serialize)]
struct StripEntry {
    test_index: usize,
    label: usize,
    strip: String,
    /// Column files, left to right: original, early, middle, later.
    columns: Vec<String>,
}

/// Trains one network per attention placement from the same seed, then
/// compares masked-feature heatmaps and accuracies.
pub fn run(cfg: &RunConfig, paper_reference: bool) -> Result<(), Failure> {
    cfg.echo(&cfg.out)?;
    let train_set = crate::session::load_split(cfg, Split::Train)?;
    let test_set = crate::session::load_split(cfg, Split::Test)?;
    let images: Vec<usize> = cfg
        .viz
        .images
        .iter()
        .copied()
        .filter(|&i| i < test_set.len())
        .collect();
    let strips_dir = cfg.out.join(STAGES_DIR).join(STRIPS_DIR);
    create_dir(&strips_dir)?;
    let none = BTreeSet::new();
    let viz = &cfg.viz;
    let size = (SIDE, SIDE);

    let mut runs = Vec::new();
    let mut overlays: Vec<Vec<RgbImage>> = vec![Vec::new(); images.len()];
    for stage in StagePlacement::ALL {
        let scfg = stage_config(cfg, stage);
        let TrainedRun { net, rows, dir } =
            run_training(&scfg, &train_set, &test_set, &stage.to_string())?;
        let mut metrics = Vec::new();
        let mut files = Vec::new();
        for (k, &i) in images.iter().enumerate() {
            let image = test_set.image(i);
            let record = activations(&net, image, &cfg.data.normalization, &none)?;
            let att = record.attention.expect("every stage run has attention");
            let r = heatmap_of(
                &att.attended,
                viz.aggregation,
                &format!("{stage} masked features"),
                size,
            )?;
            metrics.push(noise_metrics(&r.full, Some(&att.mask)));
            let original = RgbImage::from_planar(image);
            let over = overlay(&original, &colormap(&r.full), viz.alpha)?;
            let file = format!("img{i}_{stage}.ppm");
            write_ppm(&over.scaled(viz.scale), &strips_dir.join(&file))?;
            files.push(strips_dir.join(&file));
            overlays[k].push(over);
        }
        runs.push(StageRun {
            stage,
            test_acc: rows.last().map_or(0.0, |r| r.test_acc),
            metrics: mean_metrics(&metrics),
            heatmaps: files,
        });
        eprintln!("{stage}: run written to {}", dir.display());
    }

    let mut index = Vec::new();
    for (k, &i) in images.iter().enumerate() {
        let original = RgbImage::from_planar(test_set.image(i));
        let name = format!("img{i}_original.ppm");
        write_ppm(&original.scaled(viz.scale), &strips_dir.join(&name))?;
        let mut columns = vec![name];
        columns.extend(
            StagePlacement::ALL
                .iter()
                .map(|s| format!("img{i}_{s}.ppm")),
        );
        let mut panels = vec![original];
        panels.extend(overlays[k].iter().cloned());
        let strip = RgbImage::hstack(&panels, 2, [255, 255, 255]).scaled(viz.scale);
        let strip_name = format!("img{i}_strip.ppm");
        write_ppm(&strip, &strips_dir.join(&strip_name))?;
        index.push(StripEntry {
            test_index: i,
            label: test_set.label(i),
            strip: strip_name,
            columns,
        });
    }
    write_json(&strips_dir.join(STRIP_INDEX), &index)?;

    let report = stage_report(runs)?;
    let out = &cfg.out;
    write_text(&out.join(REPORT_CSV), &report.to_csv())?;
    let table = report.render(paper_reference);
    write_text(&out.join(REPORT_TXT), &table)?;
    write_json(&out.join(REPORT_JSON), &report)?;
    print!("{table}");
    Ok(())
}

fn write_text(path: &std::path::Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(path, &text)
}
