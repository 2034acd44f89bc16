use attnviz::viz::{
    aggregate, colormap, decode_ppm, encode_ppm, extract_heatmap, jet, noise_metrics, overlay,
    resize_heatmap, write_ppm, Aggregation, Heatmap, RgbImage,
};
use attnviz::{Tensor32, Tensor64};
use proptest::prelude::*;

fn activation(c: usize, h: usize, w: usize) -> impl Strategy<Value = Tensor64> {
    prop::collection::vec(-50.0f64..50.0, c * h * w)
        .prop_map(move |v| Tensor64::new(vec![1, c, h, w], v).unwrap())
}

fn first_argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

proptest! {
    #[test]
    fn values_stay_in_unit_range(a in activation(3, 5, 6)) {
        for agg in [Aggregation::MeanAbs, Aggregation::MaxAbs, Aggregation::Channel(2)] {
            let h = extract_heatmap(&a, agg, "t").unwrap();
            prop_assert!(h.values.iter().all(|v| (0.0..=1.0).contains(v)));
            let r = resize_heatmap(&h, 11, 4).unwrap();
            prop_assert!(r.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn positive_scaling_is_invisible(a in activation(4, 8, 8), alpha in 0.01f64..100.0) {
        let scaled = a.map(|v| alpha * v);
        for agg in [Aggregation::MeanAbs, Aggregation::MaxAbs] {
            let h0 = extract_heatmap(&a, agg, "t").unwrap();
            let h1 = extract_heatmap(&scaled, agg, "t").unwrap();
            prop_assert_eq!(h0.values, h1.values);
        }
    }

    #[test]
    fn argmax_is_preserved(a in activation(3, 7, 7)) {
        let raw = aggregate(&a, Aggregation::MeanAbs).unwrap();
        let h = extract_heatmap(&a, Aggregation::MeanAbs, "t").unwrap();
        let hv: Vec<f64> = h.values.iter().map(|&v| f64::from(v)).collect();
        prop_assert_eq!(first_argmax(&hv), first_argmax(&raw));
        prop_assert_eq!(h.values[first_argmax(&raw)], 1.0);
    }

    #[test]
    fn entropy_is_bounded(a in activation(2, 6, 6)) {
        let h = extract_heatmap(&a, Aggregation::MeanAbs, "t").unwrap();
        let m = noise_metrics::<f32>(&h, None);
        prop_assert!(m.entropy >= 0.0 && m.entropy <= 36f64.ln());
        prop_assert!((0.0..=1.0).contains(&m.top_decile_energy));
    }

    // The jet formula's red channel peaks at t = 0.75 and falls to 128 at
    // t = 1 (the (128, 0, 0) golden), so red is monotone only up to 0.875;
    // blue falls monotonically over the whole warm half.
    #[test]
    fn warmer_means_larger(t1 in 0.5f64..=1.0, t2 in 0.5f64..=1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        if hi <= 0.875 {
            prop_assert!(jet(lo)[0] <= jet(hi)[0]);
        }
        prop_assert!(jet(lo)[2] >= jet(hi)[2]);
    }

    #[test]
    fn overlay_alpha_zero_is_identity(
        img in prop::collection::vec(any::<u8>(), 12),
        hm in prop::collection::vec(any::<u8>(), 12),
    ) {
        let a = RgbImage::new(2, 2, img).unwrap();
        let b = RgbImage::new(2, 2, hm).unwrap();
        prop_assert_eq!(overlay(&a, &b, 0.0).unwrap(), a.clone());
        prop_assert_eq!(overlay(&a, &b, 1.0).unwrap(), b);
    }

    #[test]
    fn ppm_round_trips(w in 1usize..6, h in 1usize..6, seed in any::<u8>()) {
        let data: Vec<u8> = (0..w * h * 3).map(|i| (i as u8).wrapping_mul(seed)).collect();
        let img = RgbImage::new(w, h, data).unwrap();
        prop_assert_eq!(decode_ppm(&encode_ppm(&img).unwrap()).unwrap(), img);
    }
}

#[test]
fn scale_by_three_point_seven() {
    let v: Vec<f64> = (0..2 * 16 * 16)
        .map(|i| ((i * 37 % 101) as f64 - 50.0) / 7.0)
        .collect();
    let a = Tensor64::new(vec![1, 2, 16, 16], v).unwrap();
    let h0 = extract_heatmap(&a, Aggregation::MeanAbs, "t").unwrap();
    let h1 = extract_heatmap(&a.map(|x| 3.7 * x), Aggregation::MeanAbs, "t").unwrap();
    assert_eq!(h0.values, h1.values);
}

#[test]
fn single_precision_activations_are_accepted() {
    let mut v = vec![0.0f32; 4 * 4];
    v[6] = 2.5;
    let a = Tensor32::new(vec![1, 1, 4, 4], v).unwrap();
    let h = extract_heatmap(&a, Aggregation::MeanAbs, "t").unwrap();
    assert_eq!(h.values.iter().filter(|&&x| x == 1.0).count(), 1);
    assert_eq!(h.get(1, 2), 1.0);
}

#[test]
fn resize_constant_and_identity() {
    let h = Heatmap {
        height: 3,
        width: 5,
        values: vec![0.25; 15],
        source: "c".into(),
        aggregation: Aggregation::MeanAbs,
    };
    assert!(resize_heatmap(&h, 32, 32)
        .unwrap()
        .values
        .iter()
        .all(|&v| v == 0.25));
    assert_eq!(resize_heatmap(&h, 3, 5).unwrap(), h);
}

#[test]
fn colormapped_file_is_valid_p6() {
    let dir = tempfile::tempdir().unwrap();
    let h = Heatmap {
        height: 2,
        width: 3,
        values: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        source: "c".into(),
        aggregation: Aggregation::MeanAbs,
    };
    let path = dir.path().join("c.ppm");
    write_ppm(&colormap(&h), &path).unwrap();
    let back = attnviz::viz::read_ppm(&path).unwrap();
    assert_eq!((back.width, back.height), (3, 2));
    assert_eq!(back.pixel(0, 0), [0, 0, 128]);
    assert_eq!(back.pixel(2, 1), [128, 0, 0]);
}
