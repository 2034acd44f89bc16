//! Steps shared by several commands: data loading, network construction,
//! checkpoint I/O and a complete training run.

use std::fs;
use std::path::{Path, PathBuf};

use attnviz::data::{load_cifar10, synthetic_dataset, Cifar10Dataset, Split};
use attnviz::nn::NetworkSpec;
use attnviz::train::{checkpoint, train_with, write_metrics_csv, MetricsRow};
use attnviz::{build_network, Network, Network32};

use crate::config::{DataSource, RunConfig};
use crate::failure::Failure;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const INITIAL_CHECKPOINT_FILE: &str = "init.ckpt";

pub fn load_split(cfg: &RunConfig, split: Split) -> Result<Cifar10Dataset, Failure> {
    let data = &cfg.data;
    let set = match data.source {
        DataSource::Cifar10 => load_cifar10(&data.files(split), split).map_err(Failure::data)?,
        DataSource::Synthetic => {
            let n = match split {
                Split::Train => data.synthetic.train_size,
                Split::Test => data.synthetic.test_size,
            };
            synthetic_dataset(n, data.synthetic.seed, split)
        }
    };
    Ok(match (split, data.test_subset) {
        (Split::Test, Some(n)) => set.take(n),
        _ => set,
    })
}

pub fn model_spec(cfg: &RunConfig) -> Result<NetworkSpec, Failure> {
    Ok(cfg.train.model_spec(&cfg.model)?)
}

pub fn load_network(cfg: &RunConfig, path: &Path) -> Result<Network32, Failure> {
    let spec = model_spec(cfg)?;
    let params = checkpoint::load::<f32>(path).map_err(|e| match e {
        attnviz::Error::Io { .. } => Failure::Config(format!("cannot read checkpoint: {e}")),
        other => other.into(),
    })?;
    Ok(Network::from_params(&spec, params)?)
}

pub fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

pub struct TrainedRun {
    pub net: Network32,
    pub rows: Vec<MetricsRow>,
    pub dir: PathBuf,
}

/// Trains from scratch, writing the resolved config, initial and final
/// checkpoints and metrics into `cfg.out`.
pub fn run_training(
    cfg: &RunConfig,
    train_set: &Cifar10Dataset,
    test_set: &Cifar10Dataset,
    label: &str,
) -> Result<TrainedRun, Failure> {
    let dir = cfg.out.clone();
    cfg.echo(&dir)?;
    let spec = model_spec(cfg)?;
    let mut net: Network32 = build_network(&spec, cfg.train.seed)?;
    checkpoint::save(net.params(), &dir.join(INITIAL_CHECKPOINT_FILE))?;
    eprintln!(
        "{label}: {} parameters, {} training / {} test images",
        net.num_parameters(),
        cfg.train
            .subset_size
            .map_or(train_set.len(), |n| n.min(train_set.len())),
        test_set.len()
    );
    let epochs = cfg.train.epochs;
    let rows = train_with(
        &mut net,
        train_set,
        test_set,
        &cfg.train,
        &cfg.data.normalization,
        |r| {
            eprintln!(
                "{label}: epoch {}/{epochs} train_loss={:.4} train_acc={:.4} test_loss={:.4} test_acc={:.4}",
                r.epoch, r.train_loss, r.train_acc, r.test_loss, r.test_acc
            )
        },
    )?;
    write_metrics_csv(&rows, &dir.join(METRICS_FILE))?;
    checkpoint::save(net.params(), &dir.join(CHECKPOINT_FILE))?;
    Ok(TrainedRun { net, rows, dir })
}
