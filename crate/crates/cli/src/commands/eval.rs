use std::path::Path;

use attnviz::data::Split;
use attnviz::train::evaluate;

use crate::config::RunConfig;
use crate::failure::Failure;
use crate::session::{load_network, load_split};

pub fn run(cfg: &RunConfig, checkpoint: &Path) -> Result<(), Failure> {
    cfg.echo(&cfg.out)?;
    let net = load_network(cfg, checkpoint)?;
    let test_set = load_split(cfg, Split::Test)?;
    let result = evaluate(&net, &test_set, &cfg.data.normalization)?;
    println!("test_acc={:.4}", result.accuracy);
    Ok(())
}
