//! Side-by-side comparison of attention placements.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::StagePlacement;
use crate::viz::noise::NoiseMetrics;

pub const STAGE_REPORT_HEADER: &str = "stage,test_acc,entropy,top_decile_energy,mask_mean";

/// Published test accuracies (percent) for attention after the early,
/// middle and later stage of a full-scale network. Context only; never
/// compared against desk-scale measurements.
pub const PUBLISHED_STAGE_ACCURACY: [(StagePlacement, f64); 3] = [
    (StagePlacement::Early, 94.71),
    (StagePlacement::Middle, 94.55),
    (StagePlacement::Later, 94.23),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRun {
    pub stage: StagePlacement,
    pub test_acc: f64,
    /// Averaged over the rendered images.
    pub metrics: NoiseMetrics,
    pub heatmaps: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// Canonical order: early, middle, later.
    pub runs: Vec<StageRun>,
}

pub fn stage_report(mut runs: Vec<StageRun>) -> Result<StageReport> {
    if runs.is_empty() {
        return Err(Error::Usage("a stage report needs at least one run".into()));
    }
    runs.sort_by_key(|r| r.stage);
    if let Some(w) = runs.windows(2).find(|w| w[0].stage == w[1].stage) {
        return Err(Error::Usage(format!("stage {} appears twice", w[0].stage)));
    }
    Ok(StageReport { runs })
}

impl StageReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{STAGE_REPORT_HEADER}").unwrap();
        for r in &self.runs {
            let mask = r
                .metrics
                .mask_mean
                .map(|m| format!("{m:.6}"))
                .unwrap_or_default();
            writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{}",
                r.stage, r.test_acc, r.metrics.entropy, r.metrics.top_decile_energy, mask
            )
            .unwrap();
        }
        out
    }

    /// Plain-text table with one column per stage. With `reference`, a
    /// final row lists the published accuracies, kept apart from the
    /// measured rows.
    pub fn render(&self, reference: bool) -> String {
        let mut rows: Vec<(String, Vec<String>)> = vec![
            (
                "test_acc (%)".into(),
                self.runs
                    .iter()
                    .map(|r| format!("{:.2}", 100.0 * r.test_acc))
                    .collect(),
            ),
            (
                "entropy".into(),
                self.runs
                    .iter()
                    .map(|r| format!("{:.4}", r.metrics.entropy))
                    .collect(),
            ),
            (
                "top_decile_energy".into(),
                self.runs
                    .iter()
                    .map(|r| format!("{:.4}", r.metrics.top_decile_energy))
                    .collect(),
            ),
            (
                "mask_mean".into(),
                self.runs
                    .iter()
                    .map(|r| {
                        r.metrics
                            .mask_mean
                            .map_or("-".into(), |m| format!("{m:.4}"))
                    })
                    .collect(),
            ),
        ];
        if reference {
            rows.push((
                "published acc (%)".into(),
                self.runs
                    .iter()
                    .map(|r| {
                        PUBLISHED_STAGE_ACCURACY
                            .iter()
                            .find(|(s, _)| *s == r.stage)
                            .map_or("-".into(), |(_, a)| format!("{a:.2}"))
                    })
                    .collect(),
            ));
        }
        let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
        let mut out = format!("{:<label_w$}", "stage");
        for r in &self.runs {
            write!(out, "  {:>8}", r.stage.to_string()).unwrap();
        }
        out.push('\n');
        for (label, cells) in rows {
            write!(out, "{label:<label_w$}").unwrap();
            for c in cells {
                write!(out, "  {c:>8}").unwrap();
            }
            out.push('\n');
        }
        if reference {
            writeln!(
                out,
                "published ordering: early > middle > later; measured ordering: {}",
                self.measured_ordering()
            )
            .unwrap();
        }
        out
    }

    /// Stages by descending measured accuracy, e.g. `middle > early > later`.
    pub fn measured_ordering(&self) -> String {
        let mut runs: Vec<&StageRun> = self.runs.iter().collect();
        runs.sort_by(|a, b| {
            b.test_acc
                .total_cmp(&a.test_acc)
                .then(a.stage.cmp(&b.stage))
        });
        runs.iter()
            .map(|r| r.stage.to_string())
            .collect::<Vec<_>>()
            .join(" > ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(stage: StagePlacement, acc: f64) -> StageRun {
        StageRun {
            stage,
            test_acc: acc,
            metrics: NoiseMetrics {
                entropy: 5.0,
                top_decile_energy: 0.2,
                mask_mean: Some(0.5),
                undefined: false,
            },
            heatmaps: vec![],
        }
    }

    #[test]
    fn canonical_order_and_duplicates() {
        use StagePlacement::*;
        let r = stage_report(vec![run(Later, 0.3), run(Early, 0.4), run(Middle, 0.5)]).unwrap();
        let stages: Vec<_> = r.runs.iter().map(|r| r.stage).collect();
        assert_eq!(stages, vec![Early, Middle, Later]);
        assert_eq!(r.to_csv().lines().count(), 4);
        assert_eq!(r.measured_ordering(), "middle > early > later");
        assert!(matches!(
            stage_report(vec![run(Early, 0.1), run(Early, 0.2)]),
            Err(Error::Usage(_))
        ));
        assert!(stage_report(vec![]).is_err());
    }

    #[test]
    fn reference_row_is_separate() {
        use StagePlacement::*;
        let r = stage_report(vec![run(Early, 0.4), run(Middle, 0.5), run(Later, 0.3)]).unwrap();
        let text = r.render(true);
        let line = text
            .lines()
            .find(|l| l.starts_with("published acc"))
            .unwrap();
        assert!(line.contains("94.71") && line.contains("94.55") && line.contains("94.23"));
        assert!(!r.render(false).contains("94.71"));
        assert!(!r.to_csv().contains("94.71"));
    }
}
