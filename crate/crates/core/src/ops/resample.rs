//! Nearest and bilinear resampling of NCHW planes.
//!
//! Bilinear sampling uses half-pixel centres: output pixel `i` reads source
//! coordinate `(i + 0.5) * in / out - 0.5`, clamped below at 0, with the
//! upper neighbour clamped to the last row/column.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpsampleMode {
    Nearest,
    Bilinear,
}

/// One interpolation tap along an axis: `(lo, hi, weight of hi)`.
#[derive(Clone, Copy, Debug)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn axis_taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            Tap {
                lo,
                hi,
                frac: src - lo as f64,
            }
        })
        .collect()
}

fn check_target(op: &'static str, oh: usize, ow: usize) -> Result<()> {
    if oh == 0 || ow == 0 {
        return Err(Error::shape(
            op,
            format!("target size {oh}x{ow} must be positive"),
        ));
    }
    Ok(())
}

/// Resizes every plane of an NCHW tensor to `oh × ow`.
pub fn resize_forward<T: Scalar>(
    x: &Tensor<T>,
    oh: usize,
    ow: usize,
    mode: UpsampleMode,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("resize")?;
    check_target("resize", oh, ow)?;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    match mode {
        UpsampleMode::Nearest => {
            for plane in x.data().chunks(h * w) {
                for oy in 0..oh {
                    let iy = oy * h / oh;
                    for ox in 0..ow {
                        out.push(plane[iy * w + ox * w / ow]);
                    }
                }
            }
        }
        UpsampleMode::Bilinear => {
            let ty = axis_taps(h, oh);
            let tx = axis_taps(w, ow);
            for plane in x.data().chunks(h * w) {
                for y in &ty {
                    let fy = T::from_f64_lossy(y.frac);
                    for xt in &tx {
                        let fx = T::from_f64_lossy(xt.frac);
                        let top = plane[y.lo * w + xt.lo] * (T::one() - fx)
                            + plane[y.lo * w + xt.hi] * fx;
                        let bottom = plane[y.hi * w + xt.lo] * (T::one() - fx)
                            + plane[y.hi * w + xt.hi] * fx;
                        out.push(top * (T::one() - fy) + bottom * fy);
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, c, oh, ow], out))
}

pub fn resize_backward<T: Scalar>(
    input_shape: &[usize],
    mode: UpsampleMode,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let (h, w) = (input_shape[2], input_shape[3]);
    let (oh, ow) = (grad_out.shape()[2], grad_out.shape()[3]);
    let mut dx = vec![T::zero(); input_shape.iter().product()];
    let ty = axis_taps(h, oh);
    let tx = axis_taps(w, ow);
    for (g_plane, d_plane) in grad_out.data().chunks(oh * ow).zip(dx.chunks_mut(h * w)) {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = g_plane[oy * ow + ox];
                match mode {
                    UpsampleMode::Nearest => d_plane[(oy * h / oh) * w + ox * w / ow] += g,
                    UpsampleMode::Bilinear => {
                        let (y, xt) = (ty[oy], tx[ox]);
                        let fy = T::from_f64_lossy(y.frac);
                        let fx = T::from_f64_lossy(xt.frac);
                        let gy0 = g * (T::one() - fy);
                        let gy1 = g * fy;
                        d_plane[y.lo * w + xt.lo] += gy0 * (T::one() - fx);
                        d_plane[y.lo * w + xt.hi] += gy0 * fx;
                        d_plane[y.hi * w + xt.lo] += gy1 * (T::one() - fx);
                        d_plane[y.hi * w + xt.hi] += gy1 * fx;
                    }
                }
            }
        }
    }
    Tensor::from_parts(input_shape.to_vec(), dx)
}

pub fn upsample_forward<T: Scalar>(
    x: &Tensor<T>,
    factor: usize,
    mode: UpsampleMode,
) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(Error::shape("upsample", "factor must be >= 1"));
    }
    let (_, _, h, w) = x.dims4("upsample")?;
    resize_forward(x, h * factor, w * factor, mode)
}
