use std::collections::BTreeSet;

use attnviz::nn::{is_attention_param, AttentionModuleSpec, MaskMode, NetworkSpec};
use attnviz::{build_network, Network32, Network64, Rng, StagePlacement, Tensor32};

fn random_batch(n: usize, seed: u64) -> Tensor32 {
    let mut rng = Rng::new(seed);
    let v: Vec<f64> = (0..n * 3 * 32 * 32)
        .map(|_| rng.uniform(-2.0, 2.0))
        .collect();
    Tensor32::from_f64(&[n, 3, 32, 32], &v).unwrap()
}

fn all_taps() -> BTreeSet<StagePlacement> {
    StagePlacement::ALL.into_iter().collect()
}

#[test]
fn default_parameter_count_by_hand() {
    // stem 3·16·9+16 = 448; block1 1140; block2 2304; block3 4488;
    // classifier 48·10+10 = 490.
    let net: Network32 = build_network(&NetworkSpec::default(), 0).unwrap();
    assert_eq!(net.num_parameters(), 8870);

    // Early attention over 24 channels: two 3×3 body convs (24·24·9+24 each)
    // plus a head of 24→8→24 pointwise convs.
    let spec = NetworkSpec::default()
        .place_attention(StagePlacement::Early, AttentionModuleSpec::default())
        .unwrap();
    let net: Network32 = build_network(&spec, 0).unwrap();
    assert_eq!(net.num_parameters(), 8870 + 2 * 5208 + 200 + 216);
}

#[test]
fn same_seed_same_parameters() {
    let a: Network32 = build_network(&NetworkSpec::default(), 11).unwrap();
    let b: Network32 = build_network(&NetworkSpec::default(), 11).unwrap();
    let c: Network32 = build_network(&NetworkSpec::default(), 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.params(), c.params());
}

#[test]
fn placements_share_non_attention_initialization() {
    let plain: Network32 = build_network(&NetworkSpec::default(), 5).unwrap();
    for stage in StagePlacement::ALL {
        let spec = NetworkSpec::default()
            .place_attention(stage, AttentionModuleSpec::multi_scale())
            .unwrap();
        let net: Network32 = build_network(&spec, 5).unwrap();
        let mut shared = 0;
        for (name, t) in net.params().iter() {
            if is_attention_param(name) {
                continue;
            }
            assert_eq!(Some(t), plain.params().get(name), "{name} at {stage}");
            shared += 1;
        }
        assert_eq!(shared, plain.params().len());
    }
}

#[test]
fn neutral_mask_matches_attention_free_network() {
    let plain: Network32 = build_network(&NetworkSpec::default(), 3).unwrap();
    let x = random_batch(64, 99);
    let (want, _) = plain.forward_with_taps(&x, &BTreeSet::new()).unwrap();
    for stage in StagePlacement::ALL {
        for module in [
            AttentionModuleSpec::default(),
            AttentionModuleSpec::multi_scale(),
        ] {
            let spec = NetworkSpec::default()
                .place_attention(stage, module)
                .unwrap();
            let mut net: Network32 = build_network(&spec, 3).unwrap();
            net.set_constant_mask(20.0).unwrap();
            let (got, _) = net.forward_with_taps(&x, &BTreeSet::new()).unwrap();
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!(
                    (a - b).abs() <= 1e-5 * b.abs().max(1e-6),
                    "{stage}: {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn zero_logit_mask_halves_features_exactly() {
    for stage in StagePlacement::ALL {
        let spec = NetworkSpec::default()
            .place_attention(stage, AttentionModuleSpec::default())
            .unwrap();
        let mut net: Network64 = build_network(&spec, 4).unwrap();
        net.set_constant_mask(0.0).unwrap();
        let x = random_batch(2, 7).cast::<f64>();
        let (_, rec) = net.forward_with_taps(&x, &all_taps()).unwrap();
        let att = rec.attention.unwrap();
        assert!(att.mask.data().iter().all(|&m| m == 0.5));
        let features = &rec.taps[&stage];
        for (o, f) in att.attended.data().iter().zip(features.data()) {
            assert_eq!(*o, 0.5 * f);
        }
    }
}

#[test]
fn residual_mode_with_zero_logit_scales_by_one_and_a_half() {
    let module = AttentionModuleSpec {
        mode: MaskMode::Residual,
        ..AttentionModuleSpec::default()
    };
    let spec = NetworkSpec::default()
        .place_attention(StagePlacement::Middle, module)
        .unwrap();
    let mut net: Network64 = build_network(&spec, 4).unwrap();
    net.set_constant_mask(0.0).unwrap();
    let (_, rec) = net
        .forward_with_taps(&random_batch(1, 8).cast(), &all_taps())
        .unwrap();
    let f = &rec.taps[&StagePlacement::Middle];
    for (o, f) in rec.attention.unwrap().attended.data().iter().zip(f.data()) {
        assert_eq!(*o, f + 0.5 * f);
    }
}

#[test]
fn masks_lie_in_the_open_unit_interval() {
    let spec = NetworkSpec::default()
        .place_attention(StagePlacement::Early, AttentionModuleSpec::multi_scale())
        .unwrap();
    let net: Network32 = build_network(&spec, 9).unwrap();
    let (_, rec) = net
        .forward_with_taps(&random_batch(2, 1), &BTreeSet::new())
        .unwrap();
    let mask = rec.attention.unwrap().mask;
    assert_eq!(mask.shape(), &[2, 24, 32, 32]);
    assert!(mask.data().iter().all(|&m| (0.0..=1.0).contains(&m)));
}

#[test]
fn taps_do_not_change_logits_and_have_block_shapes() {
    let spec = NetworkSpec::default()
        .place_attention(StagePlacement::Middle, AttentionModuleSpec::default())
        .unwrap();
    let net: Network32 = build_network(&spec, 2).unwrap();
    let x = random_batch(3, 5);
    let (bare, rec0) = net.forward_with_taps(&x, &BTreeSet::new()).unwrap();
    let (tapped, rec) = net.forward_with_taps(&x, &all_taps()).unwrap();
    assert_eq!(bare, tapped);
    assert!(rec0.taps.is_empty());
    assert_eq!(rec.taps[&StagePlacement::Early].shape(), &[3, 24, 32, 32]);
    assert_eq!(rec.taps[&StagePlacement::Middle].shape(), &[3, 32, 16, 16]);
    assert_eq!(rec.taps[&StagePlacement::Later].shape(), &[3, 48, 8, 8]);
    assert_eq!(bare.shape(), &[3, 10]);
}

#[test]
fn wrong_input_size_is_a_shape_error() {
    let net: Network32 = build_network(&NetworkSpec::default(), 0).unwrap();
    let x = Tensor32::zeros(&[1, 3, 16, 16]);
    assert!(matches!(
        net.forward_with_taps(&x, &BTreeSet::new()),
        Err(attnviz::Error::Shape { .. })
    ));
}
