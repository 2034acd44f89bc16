use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolGeometry {
    pub kernel: usize,
    pub stride: usize,
    /// Max pooling only; padded cells never win.
    pub pad: usize,
}

impl PoolGeometry {
    pub fn new(kernel: usize, stride: usize) -> Self {
        PoolGeometry {
            kernel,
            stride,
            pad: 0,
        }
    }

    pub fn padded(kernel: usize, stride: usize, pad: usize) -> Self {
        PoolGeometry {
            kernel,
            stride,
            pad,
        }
    }
}

pub struct PoolOutput<T> {
    pub output: Tensor<T>,
    /// For max pooling, the flat input index that won each output cell.
    pub argmax: Vec<usize>,
}

fn output_dims(kind: PoolKind, geom: PoolGeometry, h: usize, w: usize) -> Result<(usize, usize)> {
    let PoolGeometry {
        kernel,
        stride,
        pad,
    } = geom;
    if kernel == 0 || stride == 0 {
        return Err(Error::shape(
            "pool2d",
            format!("kernel and stride must be >= 1, got {geom:?}"),
        ));
    }
    if pad > 0 && (kind == PoolKind::Avg || pad >= kernel) {
        return Err(Error::shape(
            "pool2d",
            format!("padding {pad} unsupported for {kind:?} pooling with kernel {kernel}"),
        ));
    }
    if kernel > h + 2 * pad || kernel > w + 2 * pad {
        return Err(Error::shape(
            "pool2d",
            format!("kernel {kernel} larger than input {h}x{w}"),
        ));
    }
    Ok((
        (h + 2 * pad - kernel) / stride + 1,
        (w + 2 * pad - kernel) / stride + 1,
    ))
}

pub fn pool2d_forward<T: Scalar>(
    x: &Tensor<T>,
    kind: PoolKind,
    geom: PoolGeometry,
) -> Result<PoolOutput<T>> {
    let (n, c, h, w) = x.dims4("pool2d")?;
    let (oh, ow) = output_dims(kind, geom, h, w)?;
    let PoolGeometry {
        kernel,
        stride,
        pad,
    } = geom;
    let planes = n * c;
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut argmax = Vec::new();
    let area = T::from_usize(kernel * kernel).expect("kernel area");
    for plane in 0..planes {
        let base = plane * h * w;
        let src = &x.data()[base..base + h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let y0 = (oy * stride) as isize - pad as isize;
                let x0 = (ox * stride) as isize - pad as isize;
                match kind {
                    PoolKind::Max => {
                        let mut best = T::neg_infinity();
                        let mut best_at = usize::MAX;
                        for ky in 0..kernel as isize {
                            let iy = y0 + ky;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kernel as isize {
                                let ix = x0 + kx;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let at = iy as usize * w + ix as usize;
                                // strict comparison keeps the first row-major maximum
                                if best_at == usize::MAX || src[at] > best {
                                    best = src[at];
                                    best_at = at;
                                }
                            }
                        }
                        out.push(best);
                        argmax.push(base + best_at);
                    }
                    PoolKind::Avg => {
                        let mut acc = T::zero();
                        for ky in 0..kernel {
                            let row = (y0 as usize + ky) * w + x0 as usize;
                            for &v in &src[row..row + kernel] {
                                acc += v;
                            }
                        }
                        out.push(acc / area);
                    }
                }
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::from_parts(vec![n, c, oh, ow], out),
        argmax,
    })
}

pub fn pool2d_backward<T: Scalar>(
    input_shape: &[usize],
    kind: PoolKind,
    geom: PoolGeometry,
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let mut dx = vec![T::zero(); input_shape.iter().product()];
    match kind {
        PoolKind::Max => {
            for (&at, &g) in argmax.iter().zip(grad_out.data()) {
                dx[at] += g;
            }
        }
        PoolKind::Avg => {
            let (h, w) = (input_shape[2], input_shape[3]);
            let (oh, ow) = (grad_out.shape()[2], grad_out.shape()[3]);
            let PoolGeometry { kernel, stride, .. } = geom;
            let area = T::from_usize(kernel * kernel).expect("kernel area");
            for (plane, g_plane) in grad_out.data().chunks(oh * ow).enumerate() {
                let base = plane * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let share = g_plane[oy * ow + ox] / area;
                        for ky in 0..kernel {
                            let row = base + (oy * stride + ky) * w + ox * stride;
                            for slot in &mut dx[row..row + kernel] {
                                *slot += share;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(input_shape.to_vec(), dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn two_by_two_max_and_avg() {
        let x = t(&[1, 1, 2, 2], &[1., 2., 3., 4.]);
        let max = pool2d_forward(&x, PoolKind::Max, PoolGeometry::new(2, 2)).unwrap();
        assert_eq!(max.output.data(), &[4.0]);
        let avg = pool2d_forward(&x, PoolKind::Avg, PoolGeometry::new(2, 2)).unwrap();
        assert_eq!(avg.output.data(), &[2.5]);
    }

    #[test]
    fn ramp_matches_window_scan() {
        let vals: Vec<f64> = (0..16).map(|i| ((i * 5) % 16) as f64).collect();
        let x = t(&[1, 1, 4, 4], &vals);
        let got = pool2d_forward(&x, PoolKind::Max, PoolGeometry::new(2, 2)).unwrap();
        let mut expect = Vec::new();
        for oy in 0..2 {
            for ox in 0..2 {
                let window = [
                    vals[(2 * oy) * 4 + 2 * ox],
                    vals[(2 * oy) * 4 + 2 * ox + 1],
                    vals[(2 * oy + 1) * 4 + 2 * ox],
                    vals[(2 * oy + 1) * 4 + 2 * ox + 1],
                ];
                expect.push(window.iter().cloned().fold(f64::MIN, f64::max));
            }
        }
        assert_eq!(got.output.data(), expect.as_slice());
    }

    #[test]
    fn ties_route_gradient_to_first_maximum() {
        let x = t(&[1, 1, 2, 2], &[5., 5., 5., 5.]);
        let out = pool2d_forward(&x, PoolKind::Max, PoolGeometry::new(2, 2)).unwrap();
        let g = t(&[1, 1, 1, 1], &[1.0]);
        let dx = pool2d_backward(
            x.shape(),
            PoolKind::Max,
            PoolGeometry::new(2, 2),
            &out.argmax,
            &g,
        );
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn avg_backward_spreads_uniformly() {
        let x = t(&[1, 1, 2, 2], &[1., 2., 3., 4.]);
        let out = pool2d_forward(&x, PoolKind::Avg, PoolGeometry::new(2, 2)).unwrap();
        let g = t(&[1, 1, 1, 1], &[2.0]);
        let dx = pool2d_backward(
            x.shape(),
            PoolKind::Avg,
            PoolGeometry::new(2, 2),
            &out.argmax,
            &g,
        );
        assert_eq!(dx.data(), &[0.5; 4]);
    }

    #[test]
    fn padded_max_keeps_spatial_size() {
        let x = t(
            &[1, 1, 3, 3],
            &[-1., -2., -3., -4., -5., -6., -7., -8., -9.],
        );
        let out = pool2d_forward(&x, PoolKind::Max, PoolGeometry::padded(3, 1, 1)).unwrap();
        assert_eq!(out.output.shape(), &[1, 1, 3, 3]);
        // padding never wins, even against negative values
        assert_eq!(
            out.output.data(),
            &[-1., -1., -2., -1., -1., -2., -4., -4., -5.]
        );
    }

    #[test]
    fn oversized_kernel_is_a_shape_error() {
        let x = t(&[1, 1, 2, 2], &[1., 2., 3., 4.]);
        assert!(pool2d_forward(&x, PoolKind::Max, PoolGeometry::new(3, 1)).is_err());
        assert!(pool2d_forward(&x, PoolKind::Avg, PoolGeometry::padded(3, 1, 1)).is_err());
    }
}
