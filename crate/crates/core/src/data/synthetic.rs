//! A procedurally generated, class-structured stand-in with the CIFAR-10
//! layout, for exercising the pipeline when the real batches are absent.
//!
//! Each class pairs one of five shapes with one of two colour families;
//! position, size, colours, background gradient and pixel noise are drawn
//! per image, so the task is learnable but not trivial.

use crate::data::cifar::{Cifar10Dataset, Split, NUM_CLASSES, PIXELS, SIDE};
use crate::rng::Rng;

const WARM: [[f64; 3]; 5] = [
    [220.0, 60.0, 50.0],
    [230.0, 150.0, 40.0],
    [200.0, 200.0, 60.0],
    [210.0, 90.0, 160.0],
    [180.0, 120.0, 90.0],
];
const COOL: [[f64; 3]; 5] = [
    [50.0, 90.0, 220.0],
    [60.0, 190.0, 200.0],
    [70.0, 180.0, 80.0],
    [130.0, 80.0, 210.0],
    [90.0, 130.0, 150.0],
];

fn inside(shape: usize, dy: f64, dx: f64, r: f64) -> bool {
    match shape {
        0 => dy * dy + dx * dx <= r * r,
        1 => dy.abs() <= r * 0.8 && dx.abs() <= r * 0.8,
        2 => dy.abs() <= r * 0.35 && dx.abs() <= r * 1.3,
        3 => dx.abs() <= r * 0.35 && dy.abs() <= r * 1.3,
        _ => (dy - dx).abs() <= r * 0.45 && (dy + dx).abs() <= r * 1.8,
    }
}

fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn render(label: usize, rng: &mut Rng, out: &mut [u8]) {
    let shape = label % 5;
    let family = if label < 5 { &WARM } else { &COOL };
    let base = family[rng.below(5)];
    let fg: Vec<f64> = base.iter().map(|&v| v + rng.uniform(-30.0, 30.0)).collect();
    let bg0: Vec<f64> = (0..3).map(|_| rng.uniform(40.0, 200.0)).collect();
    let bg1: Vec<f64> = (0..3).map(|_| rng.uniform(40.0, 200.0)).collect();
    let cy = rng.uniform(10.0, 22.0);
    let cx = rng.uniform(10.0, 22.0);
    let r = rng.uniform(5.0, 9.0);
    let vertical = rng.bernoulli(0.5);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let t = if vertical { y } else { x } as f64 / (SIDE - 1) as f64;
            let hit = inside(shape, y as f64 - cy, x as f64 - cx, r);
            for c in 0..3 {
                let v = if hit {
                    fg[c]
                } else {
                    bg0[c] * (1.0 - t) + bg1[c] * t
                };
                out[(c * SIDE + y) * SIDE + x] = to_byte(v + rng.uniform(-20.0, 20.0));
            }
        }
    }
}

/// `n` images with uniformly drawn labels; reproducible from `(seed, split)`.
pub fn synthetic_dataset(n: usize, seed: u64, split: Split) -> Cifar10Dataset {
    let label = match split {
        Split::Train => "synthetic-train",
        Split::Test => "synthetic-test",
    };
    let mut rng = Rng::derive(seed, label);
    let mut images = vec![0u8; n * PIXELS];
    let mut labels = Vec::with_capacity(n);
    for image in images.chunks_exact_mut(PIXELS) {
        let y = rng.below(NUM_CLASSES);
        render(y, &mut rng, image);
        labels.push(y as u8);
    }
    Cifar10Dataset::new(images, labels, split).expect("generated labels are in range")
}
