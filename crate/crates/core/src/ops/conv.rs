//! Direct 2-d cross-correlation via im2col, with stride, zero padding and
//! dilation.

use serde::{Deserialize, Serialize};

use super::linalg::{gemm_acc, transpose};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl Default for ConvGeometry {
    fn default() -> Self {
        ConvGeometry {
            stride: 1,
            pad: 0,
            dilation: 1,
        }
    }
}

impl ConvGeometry {
    pub fn new(stride: usize, pad: usize, dilation: usize) -> Self {
        ConvGeometry {
            stride,
            pad,
            dilation,
        }
    }

    /// Output extent along one axis, or `None` when the dilated kernel does
    /// not fit in the padded input.
    pub fn output_len(&self, input: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = input + 2 * self.pad;
        (padded >= span).then(|| (padded - span) / self.stride + 1)
    }

    fn is_pointwise(&self, kh: usize, kw: usize) -> bool {
        kh == 1 && kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Resolved sizes for one convolution call.
#[derive(Clone, Copy, Debug)]
struct Plan {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    geom: ConvGeometry,
}

impl Plan {
    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

fn plan<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    geom: ConvGeometry,
) -> Result<Plan> {
    let (n, cin, h, w) = x.dims4("conv2d")?;
    let (cout, wcin, kh, kw) = weight.dims4("conv2d")?;
    if geom.stride == 0 || geom.dilation == 0 {
        return Err(Error::shape(
            "conv2d",
            format!("stride and dilation must be >= 1, got {geom:?}"),
        ));
    }
    if wcin != cin {
        return Err(Error::shape(
            "conv2d",
            format!(
                "input {:?} has {cin} channels but weight {:?} expects {wcin}",
                x.shape(),
                weight.shape()
            ),
        ));
    }
    if bias.shape() != [cout] {
        return Err(Error::shape(
            "conv2d",
            format!(
                "bias {:?} does not match weight {:?}",
                bias.shape(),
                weight.shape()
            ),
        ));
    }
    let (oh, ow) = match (geom.output_len(h, kh), geom.output_len(w, kw)) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "kernel {kh}x{kw} with {geom:?} does not fit input {:?}",
                    x.shape()
                ),
            ))
        }
    };
    Ok(Plan {
        n,
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        oh,
        ow,
        geom,
    })
}

/// Row `(ci, ky, kx)`, column `(oy, ox)` of the unrolled patch matrix.
fn im2col<T: Scalar>(p: &Plan, img: &[T], cols: &mut [T]) {
    let positions = p.positions();
    let ConvGeometry {
        stride,
        pad,
        dilation,
    } = p.geom;
    for ci in 0..p.cin {
        let plane = &img[ci * p.h * p.w..(ci + 1) * p.h * p.w];
        for ky in 0..p.kh {
            for kx in 0..p.kw {
                let row = (ci * p.kh + ky) * p.kw + kx;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..p.oh {
                    let iy = (oy * stride + ky * dilation) as isize - pad as isize;
                    let out_row = &mut dst[oy * p.ow..(oy + 1) * p.ow];
                    if iy < 0 || iy >= p.h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * p.w..(iy as usize + 1) * p.w];
                    for (ox, slot) in out_row.iter_mut().enumerate() {
                        let ix = (ox * stride + kx * dilation) as isize - pad as isize;
                        *slot = if ix < 0 || ix >= p.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_acc<T: Scalar>(p: &Plan, cols: &[T], img: &mut [T]) {
    let positions = p.positions();
    let ConvGeometry {
        stride,
        pad,
        dilation,
    } = p.geom;
    for ci in 0..p.cin {
        let plane = &mut img[ci * p.h * p.w..(ci + 1) * p.h * p.w];
        for ky in 0..p.kh {
            for kx in 0..p.kw {
                let row = (ci * p.kh + ky) * p.kw + kx;
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..p.oh {
                    let iy = (oy * stride + ky * dilation) as isize - pad as isize;
                    if iy < 0 || iy >= p.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * p.w..(iy as usize + 1) * p.w];
                    for ox in 0..p.ow {
                        let ix = (ox * stride + kx * dilation) as isize - pad as isize;
                        if ix >= 0 && ix < p.w as isize {
                            dst[ix as usize] += src[oy * p.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `x[N,Cin,H,W] ⋆ weight[Cout,Cin,kh,kw] + bias[Cout]`, no kernel flip.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    geom: ConvGeometry,
) -> Result<Tensor<T>> {
    let p = plan(x, weight, bias, geom)?;
    let positions = p.positions();
    let patch = p.patch();
    let in_len = p.cin * p.h * p.w;
    let out_len = p.cout * positions;
    let pointwise = geom.is_pointwise(p.kh, p.kw);
    let mut cols = if pointwise {
        Vec::new()
    } else {
        vec![T::zero(); patch * positions]
    };
    let mut out = vec![T::zero(); p.n * out_len];
    for img in 0..p.n {
        let src = &x.data()[img * in_len..(img + 1) * in_len];
        let dst = &mut out[img * out_len..(img + 1) * out_len];
        for (co, &b) in bias.data().iter().enumerate() {
            dst[co * positions..(co + 1) * positions].fill(b);
        }
        let unrolled: &[T] = if pointwise {
            src
        } else {
            im2col(&p, src, &mut cols);
            &cols
        };
        gemm_acc(p.cout, patch, positions, weight.data(), unrolled, dst);
    }
    Ok(Tensor::from_parts(vec![p.n, p.cout, p.oh, p.ow], out))
}

pub struct Conv2dGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

/// Vector-Jacobian product of [`conv2d_forward`]. Only the requested
/// gradients are computed.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    geom: ConvGeometry,
    grad_out: &Tensor<T>,
    want: [bool; 3],
) -> Result<Conv2dGrads<T>> {
    let p = plan(x, weight, bias, geom)?;
    let [want_x, want_w, want_b] = want;
    let positions = p.positions();
    let patch = p.patch();
    let in_len = p.cin * p.h * p.w;
    let out_len = p.cout * positions;
    if grad_out.shape() != [p.n, p.cout, p.oh, p.ow] {
        return Err(Error::shape(
            "conv2d_backward",
            format!("gradient {:?} does not match output", grad_out.shape()),
        ));
    }
    let pointwise = geom.is_pointwise(p.kh, p.kw);

    let mut dx = want_x.then(|| vec![T::zero(); p.n * in_len]);
    let mut dw = want_w.then(|| vec![T::zero(); p.cout * patch]);
    let mut db = want_b.then(|| vec![T::zero(); p.cout]);
    let weight_t = want_x.then(|| transpose(p.cout, patch, weight.data()));
    let mut cols = vec![T::zero(); if pointwise { 0 } else { patch * positions }];
    let mut dcols = vec![T::zero(); if want_x { patch * positions } else { 0 }];

    for img in 0..p.n {
        let g = &grad_out.data()[img * out_len..(img + 1) * out_len];
        if let Some(db) = db.as_mut() {
            for (co, acc) in db.iter_mut().enumerate() {
                *acc += g[co * positions..(co + 1) * positions]
                    .iter()
                    .copied()
                    .sum::<T>();
            }
        }
        if let Some(dw) = dw.as_mut() {
            let src = &x.data()[img * in_len..(img + 1) * in_len];
            let unrolled: &[T] = if pointwise {
                src
            } else {
                im2col(&p, src, &mut cols);
                &cols
            };
            let cols_t = transpose(patch, positions, unrolled);
            gemm_acc(p.cout, positions, patch, g, &cols_t, dw);
        }
        if let (Some(dx), Some(wt)) = (dx.as_mut(), weight_t.as_ref()) {
            let dst = &mut dx[img * in_len..(img + 1) * in_len];
            if pointwise {
                gemm_acc(patch, p.cout, positions, wt, g, dst);
            } else {
                dcols.fill(T::zero());
                gemm_acc(patch, p.cout, positions, wt, g, &mut dcols);
                col2im_acc(&p, &dcols, dst);
            }
        }
    }
    Ok(Conv2dGrads {
        input: dx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
        weight: dw.map(|d| Tensor::from_parts(weight.shape().to_vec(), d)),
        bias: db.map(|d| Tensor::from_parts(vec![p.cout], d)),
    })
}
