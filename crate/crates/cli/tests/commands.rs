//! End-to-end checks of the `attnviz` binary on small synthetic data.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use attnviz::nn::is_attention_param;
use attnviz::train::checkpoint;
use attnviz::viz::decode_ppm;

const SMALL: &str = r#"{
  "data": {"source": "synthetic", "synthetic": {"train_size": 200, "test_size": 100, "seed": 1}, "test_subset": 100},
  "train": {"epochs": 2, "subset_size": 200, "batch_size": 50},
  "viz": {"images": [0, 1]},
  "out": "out"
}"#;

struct Workdir {
    dir: tempfile::TempDir,
}

impl Workdir {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("cfg.json"), config).unwrap();
        Workdir { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_attnviz"))
            .current_dir(self.dir.path())
            .arg("--config")
            .arg("cfg.json")
            .args(args)
            .output()
            .unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn with_train(patch: &str) -> String {
    SMALL.replace(
        r#""train": {"epochs": 2,"#,
        &format!(r#""train": {{{patch}, "epochs": 2,"#),
    )
}

fn files_in(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect()
}

#[test]
fn train_writes_metrics_checkpoint_and_resolved_config() {
    let w = Workdir::new(SMALL);
    let o = w.run(&["train"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(w.path("out/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2);
    assert!(w.path("out/model.ckpt").is_file());
    assert!(w.path("out/config.resolved.json").is_file());
    // Nothing but the config and the output directory is created.
    assert_eq!(
        files_in(w.dir.path()),
        ["cfg.json", "out"].map(String::from).into()
    );
}

#[test]
fn resolved_config_reproduces_the_run() {
    let w = Workdir::new(SMALL);
    assert_eq!(code(&w.run(&["train"])), 0);
    let resolved = fs::read_to_string(w.path("out/config.resolved.json")).unwrap();
    let again = Workdir::new(&resolved);
    assert_eq!(code(&again.run(&["train"])), 0);
    for f in ["metrics.csv", "model.ckpt", "config.resolved.json"] {
        assert_eq!(
            fs::read(w.path("out").join(f)).unwrap(),
            fs::read(again.path("out").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_flag_overrides_config() {
    let w = Workdir::new(SMALL);
    assert_eq!(code(&w.run(&["--out", "a", "train"])), 0);
    assert_eq!(code(&w.run(&["--out", "b", "--seed", "9", "train"])), 0);
    assert_ne!(
        fs::read(w.path("a/init.ckpt")).unwrap(),
        fs::read(w.path("b/init.ckpt")).unwrap()
    );
    let resolved = fs::read_to_string(w.path("b/config.resolved.json")).unwrap();
    assert!(resolved.contains("\"seed\": 9"), "{resolved}");
}

#[test]
fn zero_epochs_leaves_a_header_only_csv() {
    let w = Workdir::new(&SMALL.replace("\"epochs\": 2", "\"epochs\": 0"));
    let o = w.run(&["train"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(w.path("out/metrics.csv")).unwrap();
    assert_eq!(csv, format!("{}\n", attnviz::train::METRICS_HEADER));
}

#[test]
fn missing_data_file_exits_3() {
    let w = Workdir::new(r#"{"data": {"dir": "nowhere"}}"#);
    let o = w.run(&["train"]);
    assert_eq!(code(&o), 3);
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("data_batch_1.bin"), "{err}");
}

#[test]
fn config_errors_exit_2() {
    for bad in [
        r#"{"trian": {}}"#,
        r#"{"train": {"momentum": 1.5}}"#,
        r#"{"viz": {"alpha": 2.0}}"#,
        "not json",
    ] {
        let w = Workdir::new(bad);
        let o = w.run(&["train"]);
        assert_eq!(code(&o), 2, "{bad}: {}", stderr(&o));
    }
    let w = Workdir::new(SMALL);
    assert_eq!(code(&w.run(&["train", "--no-such-flag"])), 2);
}

#[test]
fn diverging_training_exits_4() {
    let w = Workdir::new(&with_train(r#""lr": 1e30, "momentum": 0.0"#));
    let o = w.run(&["train"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("epoch"));
}

#[test]
fn eval_matches_the_last_metrics_row_and_is_repeatable() {
    let w = Workdir::new(SMALL);
    let train = w.run(&["train"]);
    assert_eq!(code(&train), 0);
    let csv = fs::read_to_string(w.path("out/metrics.csv")).unwrap();
    let last: f64 = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(4)
        .unwrap()
        .parse()
        .unwrap();

    let a = w.run(&["eval"]);
    let b = w.run(&["eval", "--checkpoint", "out/model.ckpt"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    let printed = stdout(&a);
    let acc: f64 = printed
        .trim()
        .strip_prefix("test_acc=")
        .unwrap()
        .parse()
        .unwrap();
    assert!((acc - last).abs() <= 1e-6, "{acc} vs {last}");
    assert_eq!(printed.trim(), format!("test_acc={last:.4}"));
}

#[test]
fn corrupted_or_mismatched_checkpoint_exits_2() {
    let w = Workdir::new(SMALL);
    assert_eq!(code(&w.run(&["train"])), 0);
    let mut bytes = fs::read(w.path("out/model.ckpt")).unwrap();
    bytes[0] ^= 0xff;
    fs::write(w.path("bad.ckpt"), &bytes).unwrap();
    assert_eq!(code(&w.run(&["eval", "--checkpoint", "bad.ckpt"])), 2);

    let wider = SMALL.replace(
        "\"viz\"",
        "\"model\": {\"stem\": {\"out_channels\": 8, \"kernel\": 3}}, \"viz\"",
    );
    fs::write(w.path("cfg.json"), wider).unwrap();
    let o = w.run(&["eval", "--checkpoint", "out/model.ckpt"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("stem.weight"), "{}", stderr(&o));
}

#[test]
fn heatmap_counting_contract_and_valid_ppm() {
    let w = Workdir::new(SMALL);
    assert_eq!(code(&w.run(&["train"])), 0);
    let o = w.run(&["heatmap", "--image", "1", "--taps", "early,middle,later"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let files = files_in(&w.path("out/heatmap"));
    let ppm: Vec<_> = files.iter().filter(|f| f.ends_with(".ppm")).collect();
    let json: Vec<_> = files.iter().filter(|f| f.ends_with(".json")).collect();
    assert_eq!((ppm.len(), json.len()), (9, 1), "{files:?}");
    for f in ppm {
        let img = decode_ppm(&fs::read(w.path("out/heatmap").join(f)).unwrap()).unwrap();
        assert_eq!((img.width, img.height), (128, 128), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(w.path("out/heatmap/heatmap.json")).unwrap()).unwrap();
    assert_eq!(report["heatmaps"].as_object().unwrap().len(), 3);
}

#[test]
fn heatmap_is_byte_identical_across_runs() {
    let w = Workdir::new(SMALL);
    assert_eq!(code(&w.run(&["train"])), 0);
    assert_eq!(code(&w.run(&["heatmap", "--taps", "middle"])), 0);
    let first: Vec<_> = files_in(&w.path("out/heatmap"))
        .into_iter()
        .map(|f| fs::read(w.path("out/heatmap").join(&f)).unwrap())
        .collect();
    assert_eq!(code(&w.run(&["heatmap", "--taps", "middle"])), 0);
    let second: Vec<_> = files_in(&w.path("out/heatmap"))
        .into_iter()
        .map(|f| fs::read(w.path("out/heatmap").join(&f)).unwrap())
        .collect();
    assert_eq!(first, second);
}

#[test]
fn heatmap_includes_masks_when_attention_is_present() {
    let w = Workdir::new(&with_train(r#""stage": "middle""#));
    assert_eq!(code(&w.run(&["train"])), 0);
    let o = w.run(&["heatmap", "--taps", "later"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let files = files_in(&w.path("out/heatmap"));
    assert!(files.iter().any(|f| f.starts_with("mask")), "{files:?}");
    assert!(files.iter().any(|f| f.starts_with("attended")), "{files:?}");
}

#[test]
fn heatmap_from_a_ppm_file() {
    let w = Workdir::new(SMALL);
    assert_eq!(code(&w.run(&["train"])), 0);
    let img = attnviz::viz::RgbImage::filled(32, 32, [10, 200, 30]);
    attnviz::viz::write_ppm(&img, &w.path("in.ppm")).unwrap();
    let o = w.run(&["heatmap", "--image-file", "in.ppm", "--taps", "early"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    attnviz::viz::write_ppm(
        &attnviz::viz::RgbImage::filled(8, 8, [0; 3]),
        &w.path("small.ppm"),
    )
    .unwrap();
    assert_ne!(code(&w.run(&["heatmap", "--image-file", "small.ppm"])), 0);
}

#[test]
fn bad_tap_name_exits_2() {
    let w = Workdir::new(SMALL);
    assert_eq!(code(&w.run(&["train"])), 0);
    let o = w.run(&["heatmap", "--taps", "early,bogus"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn stages_report_and_shared_initialization() {
    let w = Workdir::new(&SMALL.replace("\"epochs\": 2", "\"epochs\": 1"));
    let o = w.run(&["stages", "--paper-reference"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let csv = fs::read_to_string(w.path("out/stage_report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(
        rows[0],
        "stage,test_acc,entropy,top_decile_energy,mask_mean"
    );
    let stages: Vec<&str> = rows[1..]
        .iter()
        .map(|r| r.split(',').next().unwrap())
        .collect();
    assert_eq!(stages, ["early", "middle", "later"]);

    let table = stdout(&o);
    let reference = table
        .lines()
        .find(|l| l.starts_with("published acc"))
        .unwrap();
    let numbers: Vec<&str> = reference.split_whitespace().skip(3).collect();
    assert_eq!(numbers, ["94.71", "94.55", "94.23"]);
    assert_eq!(
        table,
        fs::read_to_string(w.path("out/stage_report.txt")).unwrap()
    );

    let strips = files_in(&w.path("out/stages/strips"));
    for col in ["original", "early", "middle", "later", "strip"] {
        assert!(strips.contains(&format!("img0_{col}.ppm")), "{col}");
    }
    assert!(strips.contains("index.json"));

    let inits: Vec<_> = ["early", "middle", "later"]
        .iter()
        .map(|s| checkpoint::load::<f32>(&w.path(&format!("out/stages/{s}/init.ckpt"))).unwrap())
        .collect();
    let shared: Vec<_> = inits[0]
        .names()
        .iter()
        .filter(|n| !is_attention_param(n))
        .collect();
    assert!(!shared.is_empty());
    for other in &inits[1..] {
        for name in &shared {
            assert_eq!(inits[0].get(name), other.get(name), "{name}");
        }
    }
}

#[test]
fn stages_without_reference_has_no_published_row() {
    let w = Workdir::new(&SMALL.replace("\"epochs\": 2", "\"epochs\": 0"));
    let o = w.run(&["stages"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!stdout(&o).contains("published"));
    let csv = fs::read_to_string(w.path("out/stage_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn gradcheck_lists_every_op_once() {
    let w = Workdir::new("{}");
    let o = w.run(&["gradcheck", "--trials", "10"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    for case in attnviz::gradcheck::registry() {
        let hits = out
            .lines()
            .filter(|l| l.split_whitespace().next() == Some(case.name))
            .count();
        assert_eq!(hits, 1, "{}", case.name);
    }
}

#[test]
fn gradcheck_detects_broken_sigmoid() {
    let w = Workdir::new("{}");
    let o = w.run(&[
        "gradcheck",
        "--trials",
        "3",
        "--inject-fault",
        "sigmoid-backward",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("sigmoid"), "{}", stderr(&o));
}
