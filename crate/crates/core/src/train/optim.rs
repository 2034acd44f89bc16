use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One momentum-SGD update over flat buffers:
/// `v ← momentum·v + g + weight_decay·p`, then `p ← p − lr·v`.
pub fn sgd_momentum_step<T: Scalar>(
    params: &mut [T],
    velocity: &mut [T],
    grads: &[T],
    lr: T,
    momentum: T,
    weight_decay: T,
) -> Result<()> {
    if params.len() != velocity.len() || params.len() != grads.len() {
        return Err(Error::shape(
            "sgd_momentum_step",
            format!(
                "params {}, velocity {}, grads {} must match",
                params.len(),
                velocity.len(),
                grads.len()
            ),
        ));
    }
    for ((p, v), &g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        *v = momentum * *v + g + weight_decay * *p;
        *p -= lr * *v;
    }
    Ok(())
}

/// Velocity buffers for every parameter of a store, zero-initialized.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub lr: T,
    pub momentum: T,
    pub weight_decay: T,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(params: &ParamStore<T>, lr: T, momentum: T, weight_decay: T) -> Self {
        Sgd {
            lr,
            momentum,
            weight_decay,
            velocity: params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    /// `grads` in store order.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != self.velocity.len() {
            return Err(Error::shape(
                "sgd",
                format!(
                    "{} gradients for {} parameters",
                    grads.len(),
                    self.velocity.len()
                ),
            ));
        }
        for ((p, v), g) in params
            .tensors_mut()
            .iter_mut()
            .zip(&mut self.velocity)
            .zip(grads)
        {
            sgd_momentum_step(
                p.data_mut(),
                v.data_mut(),
                g.data(),
                self.lr,
                self.momentum,
                self.weight_decay,
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_sgd_without_momentum() {
        let mut p = [1.0, -2.0];
        let mut v = [0.0; 2];
        sgd_momentum_step(&mut p, &mut v, &[0.5, 1.0], 0.1, 0.0, 0.0).unwrap();
        assert_eq!(p, [1.0 - 0.1 * 0.5, -2.0 - 0.1]);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = [3.0f32];
        let mut v = [0.0f32];
        sgd_momentum_step(&mut p, &mut v, &[0.0], 0.1, 0.9, 0.0).unwrap();
        assert_eq!(p, [3.0]);
    }

    #[test]
    fn two_steps_match_the_recurrence() {
        // f(p) = p²/2, so g = p.
        let (lr, m, wd) = (0.1, 0.9, 0.01);
        let mut p = [2.0f64];
        let mut v = [0.0f64];
        let (mut ep, mut ev) = (2.0f64, 0.0f64);
        for _ in 0..2 {
            let g = [p[0]];
            sgd_momentum_step(&mut p, &mut v, &g, lr, m, wd).unwrap();
            ev = m * ev + ep + wd * ep;
            ep -= lr * ev;
        }
        assert_eq!(p[0], ep);
        // Hand-evaluated: v1 = 2.02, p1 = 1.798; v2 = 1.818 + 1.81598 = 3.63398, p2 = 1.434602.
        assert!((p[0] - 1.434602).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut p = [0.0f32; 2];
        let mut v = [0.0f32; 1];
        assert!(sgd_momentum_step(&mut p, &mut v, &[0.0; 2], 0.1, 0.0, 0.0).is_err());
    }
}
