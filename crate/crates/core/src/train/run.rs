use std::collections::BTreeSet;
use std::time::Instant;

use crate::data::{augment, preprocess, ChannelStats, Cifar10Dataset, PIXELS};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::train::config::TrainConfig;
use crate::train::metrics::MetricsRow;
use crate::train::optim::Sgd;

const EVAL_BATCH: usize = 200;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy of one logits row against `label`, in f64.
fn cross_entropy<T: Scalar>(row: &[T], label: usize) -> f64 {
    let z: Vec<f64> = row.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[label]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    /// Predicted class of every sample, in dataset order.
    pub predictions: Vec<usize>,
}

/// Mean cross-entropy and accuracy without augmentation. Leaves the network
/// untouched.
pub fn evaluate<T: Scalar>(
    net: &Network<T>,
    data: &Cifar10Dataset,
    stats: &ChannelStats,
) -> Result<Evaluation> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut predictions = Vec::with_capacity(data.len());
    let none = BTreeSet::new();
    let classes = net.spec().head.num_classes;
    for start in (0..data.len()).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(data.len());
        let x = preprocess::<T>(&data.images()[start * PIXELS..end * PIXELS], stats);
        let (logits, _) = net.forward_with_taps(&x, &none)?;
        for (row, i) in logits.data().chunks_exact(classes).zip(start..end) {
            let pred = argmax(row);
            correct += usize::from(pred == data.label(i));
            loss += cross_entropy(row, data.label(i));
            predictions.push(pred);
        }
    }
    let n = data.len().max(1) as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
        predictions,
    })
}

pub fn train<T: Scalar>(
    net: &mut Network<T>,
    train_set: &Cifar10Dataset,
    test_set: &Cifar10Dataset,
    config: &TrainConfig,
    stats: &ChannelStats,
) -> Result<Vec<MetricsRow>> {
    train_with(net, train_set, test_set, config, stats, |_| {})
}

/// Momentum SGD over shuffled minibatches, evaluating on `test_set` after
/// every epoch. One stream seeded from `config.seed` drives the per-epoch
/// shuffle and then the augmentation draws of each batch, in that order.
pub fn train_with<T: Scalar>(
    net: &mut Network<T>,
    train_set: &Cifar10Dataset,
    test_set: &Cifar10Dataset,
    config: &TrainConfig,
    stats: &ChannelStats,
    mut on_epoch: impl FnMut(&MetricsRow),
) -> Result<Vec<MetricsRow>> {
    config.validate()?;
    let data = match config.subset_size {
        Some(n) => train_set.take(n),
        None => train_set.clone(),
    };
    if config.epochs > 0 && data.is_empty() {
        return Err(Error::Input("the training set is empty".into()));
    }
    let start = Instant::now();
    let mut rng = Rng::derive(config.seed, "train");
    let mut sgd = Sgd::new(
        net.params(),
        T::from_f64_lossy(config.lr),
        T::from_f64_lossy(config.momentum),
        T::from_f64_lossy(config.weight_decay),
    );
    let classes = net.spec().head.num_classes;
    let none = BTreeSet::new();
    let mut rows = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut bytes = Vec::with_capacity(chunk.len() * PIXELS);
            for &i in chunk {
                bytes.extend_from_slice(data.image(i));
            }
            augment(&mut bytes, &config.augment, &mut rng);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.label(i)).collect();

            let mut tape = Tape::new();
            let params = net.bind(&mut tape, true);
            let input = tape.constant(preprocess::<T>(&bytes, stats));
            let (logits, _) = net.forward(&mut tape, &params, input, &none)?;
            let loss = tape.softmax_cross_entropy(logits, &labels)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b + 1,
                });
            }
            loss_sum += value.to_f64().unwrap_or(f64::NAN) * chunk.len() as f64;
            for (row, &y) in tape.value(logits).data().chunks_exact(classes).zip(&labels) {
                correct += usize::from(argmax(row) == y);
            }

            let mut grads = tape.backward(loss)?;
            let grads: Vec<Tensor<T>> = params
                .vars()
                .iter()
                .zip(net.params().tensors())
                .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
                .collect();
            sgd.step(net.params_mut(), &grads)?;
        }
        let test = evaluate(net, test_set, stats)?;
        let row = MetricsRow {
            epoch,
            train_loss: loss_sum / data.len() as f64,
            train_acc: correct as f64 / data.len() as f64,
            test_loss: test.loss,
            test_acc: test.accuracy,
            wall_seconds: if config.record_wall_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        on_epoch(&row);
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0f32, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0f64; 10]), 0);
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        assert!((cross_entropy(&[0.0f32; 10], 3) - 10f64.ln()).abs() < 1e-12);
    }
}
