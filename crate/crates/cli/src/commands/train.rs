use attnviz::data::Split;

use crate::config::RunConfig;
use crate::failure::Failure;
use crate::session::{load_split, run_training};

pub fn run(cfg: &RunConfig) -> Result<(), Failure> {
    let train_set = load_split(cfg, Split::Train)?;
    let test_set = load_split(cfg, Split::Test)?;
    let run = run_training(cfg, &train_set, &test_set, "train")?;
    if let Some(last) = run.rows.last() {
        println!("test_acc={:.4}", last.test_acc);
    }
    Ok(())
}
