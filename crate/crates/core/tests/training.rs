use attnviz::data::{synthetic_dataset, AugmentConfig, ChannelStats, Cifar10Dataset, Split};
use attnviz::nn::{AttentionModuleSpec, ParamStore};
use attnviz::train::{checkpoint, evaluate, train, Sgd, TrainConfig};
use attnviz::{build_network, Error, Network, Network32, NetworkSpec, StagePlacement};

fn stats() -> ChannelStats {
    ChannelStats::CIFAR10
}

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 32,
        subset_size: None,
        ..TrainConfig::default()
    }
}

fn net(seed: u64) -> Network32 {
    build_network(&NetworkSpec::default(), seed).unwrap()
}

#[test]
fn zero_epochs_leaves_parameters_untouched() {
    let data = synthetic_dataset(64, 1, Split::Train);
    let mut n = net(1);
    let before = n.clone();
    let cfg = TrainConfig {
        epochs: 0,
        ..small_config()
    };
    assert!(train(&mut n, &data, &data, &cfg, &stats())
        .unwrap()
        .is_empty());
    assert_eq!(n, before);
}

#[test]
fn zero_learning_rate_keeps_train_loss_constant() {
    let data = synthetic_dataset(96, 2, Split::Train);
    let mut n = net(2);
    let before = n.clone();
    let cfg = TrainConfig {
        lr: 0.0,
        epochs: 3,
        augment: AugmentConfig::NONE,
        ..small_config()
    };
    let rows = train(&mut n, &data, &data, &cfg, &stats()).unwrap();
    for r in &rows[1..] {
        assert!((r.train_loss - rows[0].train_loss).abs() < 1e-6);
    }
    assert_eq!(n, before);
}

#[test]
fn identical_config_gives_identical_history_and_checkpoint() {
    let train_set = synthetic_dataset(96, 3, Split::Train);
    let test_set = synthetic_dataset(40, 3, Split::Test);
    let spec = NetworkSpec::default()
        .place_attention(StagePlacement::Middle, AttentionModuleSpec::default())
        .unwrap();
    let run = || {
        let mut n: Network32 = build_network(&spec, 8).unwrap();
        let rows = train(&mut n, &train_set, &test_set, &small_config(), &stats()).unwrap();
        (rows, checkpoint::encode(n.params()))
    };
    let (a, ca) = run();
    let (b, cb) = run();
    assert_eq!(a, b);
    assert_eq!(ca, cb);
    assert_eq!(a.len(), 2);
    assert!(a.iter().all(|r| r.wall_seconds == 0.0));
}

#[test]
fn subset_size_limits_training_images() {
    let data = synthetic_dataset(100, 4, Split::Train);
    let cfg = TrainConfig {
        epochs: 1,
        subset_size: Some(10),
        ..small_config()
    };
    let mut a = net(4);
    let mut b = net(4);
    train(&mut a, &data, &data, &cfg, &stats()).unwrap();
    let cfg_b = TrainConfig {
        subset_size: None,
        ..cfg.clone()
    };
    train(&mut b, &data.take(10), &data, &cfg_b, &stats()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn non_finite_loss_names_epoch_and_batch() {
    let data = synthetic_dataset(64, 5, Split::Train);
    let mut n = net(5);
    n.params_mut()
        .get_mut("classifier.bias")
        .unwrap()
        .data_mut()[0] = f32::NAN;
    match train(&mut n, &data, &data, &small_config(), &stats()) {
        Err(Error::NonFiniteLoss { epoch: 1, batch: 1 }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn evaluation_is_pure_and_recountable() {
    let data = synthetic_dataset(150, 6, Split::Test);
    let n = net(6);
    let before = n.clone();
    let a = evaluate(&n, &data, &stats()).unwrap();
    let b = evaluate(&n, &data, &stats()).unwrap();
    assert_eq!(a, b);
    assert_eq!(n, before);
    let hits = a
        .predictions
        .iter()
        .enumerate()
        .filter(|&(i, &p)| p == data.label(i))
        .count();
    assert_eq!(a.accuracy, hits as f64 / data.len() as f64);
}

#[test]
fn constant_logits_score_chance_on_a_balanced_set() {
    let src = synthetic_dataset(100, 7, Split::Test);
    let labels: Vec<u8> = (0..100).map(|i| (i % 10) as u8).collect();
    let data = Cifar10Dataset::new(src.images().to_vec(), labels, Split::Test).unwrap();
    let mut n = net(7);
    n.params_mut()
        .get_mut("classifier.weight")
        .unwrap()
        .data_mut()
        .fill(0.0);
    let e = evaluate(&n, &data, &stats()).unwrap();
    assert_eq!(e.accuracy, 0.1);
    assert!(e.predictions.iter().all(|&p| p == 0), "ties go to class 0");
    assert!((e.loss - 10f64.ln()).abs() < 1e-9);
}

#[test]
fn momentum_sgd_descends_a_convex_quadratic_monotonically() {
    // f(p) = Σ a_i p_i² / 2 with gradient a ⊙ p.
    let a = [1.0f64, 3.0, 0.5];
    let mut params = ParamStore::default();
    params
        .insert(
            "p",
            attnviz::Tensor64::new(vec![3], vec![2.0, -1.0, 4.0]).unwrap(),
        )
        .unwrap();
    let loss = |p: &[f64]| p.iter().zip(&a).map(|(p, a)| a * p * p / 2.0).sum::<f64>();
    let mut sgd = Sgd::new(&params, 0.01, 0.5, 0.0);
    let mut prev = loss(params.get("p").unwrap().data());
    for _ in 0..100 {
        let p = params.get("p").unwrap().data().to_vec();
        let g: Vec<f64> = p.iter().zip(&a).map(|(p, a)| a * p).collect();
        sgd.step(&mut params, &[attnviz::Tensor64::new(vec![3], g).unwrap()])
            .unwrap();
        let now = loss(params.get("p").unwrap().data());
        assert!(now < prev, "{now} !< {prev}");
        prev = now;
    }
}

#[test]
fn checkpoint_round_trip_and_mismatch_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let n = net(9);
    checkpoint::save(n.params(), &path).unwrap();
    let loaded = checkpoint::load::<f32>(&path).unwrap();
    let back = Network::from_params(&NetworkSpec::default(), loaded.clone()).unwrap();
    assert_eq!(back, n);

    let mut wrong = NetworkSpec::default();
    wrong.stem.out_channels = 8;
    match Network::from_params(&wrong, loaded) {
        Err(Error::Checkpoint(msg)) => assert!(msg.contains("stem.weight"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn invalid_config_is_rejected() {
    let data = synthetic_dataset(8, 1, Split::Train);
    for cfg in [
        TrainConfig {
            momentum: 1.0,
            ..small_config()
        },
        TrainConfig {
            batch_size: 0,
            ..small_config()
        },
        TrainConfig {
            lr: -0.1,
            ..small_config()
        },
    ] {
        assert!(matches!(
            train(&mut net(1), &data, &data, &cfg, &stats()),
            Err(Error::Config(_))
        ));
    }
}
