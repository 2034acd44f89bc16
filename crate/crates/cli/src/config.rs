//! The JSON run configuration. Every section is optional and falls back to
//! the desk-scale defaults; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use attnviz::data::{split_files, ChannelStats, Split};
use attnviz::nn::NetworkSpec;
use attnviz::train::TrainConfig;
use attnviz::viz::Aggregation;
use attnviz::StagePlacement;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// CIFAR-10 binary batch files.
    #[default]
    Cifar10,
    /// Generated class-structured images in the same layout.
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            train_size: 2000,
            test_size: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Directory holding `data_batch_{1..5}.bin` and `test_batch.bin`.
    pub dir: PathBuf,
    /// Explicit file lists; override `dir` when given.
    pub train_files: Option<Vec<PathBuf>>,
    pub test_files: Option<Vec<PathBuf>>,
    /// Evaluate on the first `n` test images only.
    pub test_subset: Option<usize>,
    pub synthetic: SyntheticConfig,
    pub normalization: ChannelStats,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Cifar10,
            dir: PathBuf::from("data/cifar-10-batches-bin"),
            train_files: None,
            test_files: None,
            test_subset: Some(1000),
            synthetic: SyntheticConfig::default(),
            normalization: ChannelStats::CIFAR10,
        }
    }
}

impl DataConfig {
    pub fn files(&self, split: Split) -> Vec<PathBuf> {
        let explicit = match split {
            Split::Train => &self.train_files,
            Split::Test => &self.test_files,
        };
        explicit
            .clone()
            .unwrap_or_else(|| split_files(&self.dir, split))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VizConfig {
    pub taps: Vec<StagePlacement>,
    pub aggregation: Aggregation,
    pub alpha: f64,
    /// Test-set images rendered by `heatmap` (first entry) and `stages`.
    pub images: Vec<usize>,
    /// Nearest-neighbour enlargement of every written image.
    pub scale: usize,
}

impl Default for VizConfig {
    fn default() -> Self {
        VizConfig {
            taps: StagePlacement::ALL.to_vec(),
            aggregation: Aggregation::MeanAbs,
            alpha: 0.5,
            images: vec![0, 1, 2, 3],
            scale: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: NetworkSpec,
    pub train: TrainConfig,
    pub viz: VizConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            model: NetworkSpec::default(),
            train: TrainConfig::default(),
            viz: VizConfig::default(),
            out: PathBuf::from("out"),
        }
    }
}

pub const RESOLVED_CONFIG: &str = "config.resolved.json";

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        serde_json::from_str(text).map_err(|e| Failure::Config(format!("config: {e}")))
    }

    /// Reads `path` (defaults when absent) and applies command-line
    /// overrides.
    pub fn resolve(
        path: Option<&Path>,
        out: Option<PathBuf>,
        seed: Option<u64>,
    ) -> Result<Self, Failure> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    Failure::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                Self::parse(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(out) = out {
            cfg.out = out;
        }
        if let Some(seed) = seed {
            cfg.train.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.train.validate()?;
        self.train.model_spec(&self.model)?;
        if !(0.0..=1.0).contains(&self.viz.alpha) {
            return Err(Failure::Config(format!(
                "viz.alpha {} is outside [0, 1]",
                self.viz.alpha
            )));
        }
        if self.viz.scale == 0 {
            return Err(Failure::Config("viz.scale must be at least 1".into()));
        }
        if self.model.input_channels != 3 || self.model.input_size != 32 {
            return Err(Failure::Config(
                "model input must be 3×32×32 to match CIFAR-10 images".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Writes `config.resolved.json` into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<(), Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        let path = dir.join(RESOLVED_CONFIG);
        fs::write(&path, self.to_json()).map_err(|e| Failure::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(RunConfig::parse("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for doc in [
            r#"{"trian": {}}"#,
            r#"{"train": {"learning_rate": 0.1}}"#,
            r#"{"viz": {"taps": ["early"], "colour": "jet"}}"#,
        ] {
            assert!(
                matches!(RunConfig::parse(doc), Err(Failure::Config(_))),
                "{doc}"
            );
        }
    }

    #[test]
    fn partial_sections_are_filled() {
        let cfg =
            RunConfig::parse(r#"{"train": {"epochs": 1}, "viz": {"aggregation": {"channel": 3}}}"#)
                .unwrap();
        assert_eq!(cfg.train.epochs, 1);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.viz.aggregation, Aggregation::Channel(3));
        assert_eq!(cfg.viz.taps.len(), 3);
    }

    #[test]
    fn bad_tap_is_a_config_error() {
        assert!(RunConfig::parse(r#"{"viz": {"taps": ["deep"]}}"#).is_err());
    }
}
