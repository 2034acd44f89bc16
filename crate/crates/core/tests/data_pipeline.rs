use attnviz::data::{
    augment, compute_channel_stats, flip_horizontal, load_cifar10, preprocess, synthetic_dataset,
    AugmentConfig, Cifar10Dataset, Split, PIXELS, RECORD_BYTES,
};
use attnviz::{Error, Rng};

#[test]
fn loader_round_trips_synthetic_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = synthetic_dataset(37, 1, Split::Train);
    let b = synthetic_dataset(5, 2, Split::Train);
    let (pa, pb) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    a.write(&pa).unwrap();
    b.write(&pb).unwrap();
    assert_eq!(
        std::fs::metadata(&pa).unwrap().len(),
        37 * RECORD_BYTES as u64
    );
    assert_eq!(load_cifar10(&[&pa], Split::Train).unwrap(), a);

    let both = load_cifar10(&[&pa, &pb], Split::Train).unwrap();
    assert_eq!(both.len(), 42);
    assert_eq!(both.image(40), b.image(3));
    assert_eq!(both.label(37), b.label(0));
}

#[test]
fn loader_rejects_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("short.bin");
    std::fs::write(&short, vec![0u8; PIXELS]).unwrap();
    assert!(matches!(
        load_cifar10(&[&short], Split::Test),
        Err(Error::Format { offset: 0, .. })
    ));
    let empty = dir.path().join("empty.bin");
    std::fs::write(&empty, []).unwrap();
    assert!(load_cifar10(&[&empty], Split::Test).unwrap().is_empty());
    assert!(matches!(
        load_cifar10(&[dir.path().join("missing.bin")], Split::Test),
        Err(Error::Io { .. })
    ));
}

#[test]
fn hand_built_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.bin");
    let mut bytes = vec![0u8; RECORD_BYTES];
    bytes[0] = 7;
    bytes[1] = 255;
    std::fs::write(&path, &bytes).unwrap();
    let d = load_cifar10(&[&path], Split::Train).unwrap();
    assert_eq!((d.len(), d.label(0), d.pixel(0, 0, 0, 0)), (1, 7, 255));
}

#[test]
fn normalized_split_has_zero_channel_means() {
    let d = synthetic_dataset(300, 4, Split::Train);
    let stats = compute_channel_stats(&d);
    let x = preprocess::<f64>(d.images(), &stats);
    let plane = 32 * 32;
    for c in 0..3 {
        let (mut sum, mut sq) = (0.0, 0.0);
        for img in x.data().chunks(3 * plane) {
            for &v in &img[c * plane..(c + 1) * plane] {
                sum += v;
                sq += v * v;
            }
        }
        let n = (d.len() * plane) as f64;
        assert!((sum / n).abs() < 1e-3, "channel {c} mean {}", sum / n);
        assert!(
            (sq / n - 1.0).abs() < 1e-3,
            "channel {c} variance {}",
            sq / n
        );
    }
}

fn batch() -> Vec<u8> {
    synthetic_dataset(6, 9, Split::Train).images().to_vec()
}

#[test]
fn augmentation_off_is_identity() {
    let mut b = batch();
    let mut rng = Rng::new(1);
    augment(&mut b, &AugmentConfig::NONE, &mut rng);
    assert_eq!(b, batch());
    assert_eq!(rng, Rng::new(1), "no draws when disabled");
}

#[test]
fn augmentation_is_seeded() {
    let (mut a, mut b) = (batch(), batch());
    augment(&mut a, &AugmentConfig::default(), &mut Rng::new(5));
    augment(&mut b, &AugmentConfig::default(), &mut Rng::new(5));
    assert_eq!(a, b);
    assert_ne!(a, batch());
}

#[test]
fn flip_is_an_involution() {
    let mut img = batch()[..PIXELS].to_vec();
    flip_horizontal(&mut img);
    assert_ne!(img, batch()[..PIXELS]);
    assert_eq!(img[0], batch()[31]);
    flip_horizontal(&mut img);
    assert_eq!(img, batch()[..PIXELS]);
}

#[test]
fn draw_order_is_flip_then_crop_per_image() {
    let cfg = AugmentConfig::default();
    let mut b = batch();
    let mut rng = Rng::new(77);
    augment(&mut b, &cfg, &mut rng);

    let mut replay = Rng::new(77);
    let mut expect = batch();
    for img in expect.chunks_exact_mut(PIXELS) {
        if replay.bernoulli(0.5) {
            flip_horizontal(img);
        }
        let dy = replay.below(9);
        let dx = replay.below(9);
        let out = attnviz::data::pad_crop(img, 4, dy, dx);
        img.copy_from_slice(&out);
    }
    assert_eq!(b, expect);
    assert_eq!(rng, replay);
}

#[test]
fn dataset_validates_labels() {
    assert!(Cifar10Dataset::new(vec![0; PIXELS], vec![10], Split::Train).is_err());
    assert!(Cifar10Dataset::new(vec![0; PIXELS], vec![], Split::Train).is_err());
}
