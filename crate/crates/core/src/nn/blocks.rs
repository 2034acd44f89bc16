//! Building blocks recorded onto a [`Tape`]: the mini inception block, the
//! shared hourglass body, mask heads and mask application.

use crate::error::{Error, Result};
use crate::nn::params::{declare_conv, Bound, ParamDecl};
use crate::nn::spec::{AttentionModuleSpec, InceptionWidths, MaskHeadSpec, MaskMode};
use crate::ops::{ConvGeometry, PoolGeometry, PoolKind, UpsampleMode};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

const SAME_3X3: ConvGeometry = ConvGeometry {
    stride: 1,
    pad: 1,
    dilation: 1,
};
const DILATED_3X3: ConvGeometry = ConvGeometry {
    stride: 1,
    pad: 2,
    dilation: 2,
};
const POINTWISE: ConvGeometry = ConvGeometry {
    stride: 1,
    pad: 0,
    dilation: 1,
};
const HALVE: PoolGeometry = PoolGeometry {
    kernel: 2,
    stride: 2,
    pad: 0,
};

pub(crate) fn conv<T: Scalar>(
    tape: &mut Tape<T>,
    params: &Bound,
    name: &str,
    x: Var,
    geom: ConvGeometry,
) -> Result<Var> {
    let w = params.var(&format!("{name}.weight"))?;
    let b = params.var(&format!("{name}.bias"))?;
    tape.conv2d(x, w, b, geom)
}

fn conv_relu<T: Scalar>(
    tape: &mut Tape<T>,
    params: &Bound,
    name: &str,
    x: Var,
    geom: ConvGeometry,
) -> Result<Var> {
    let y = conv(tape, params, name, x, geom)?;
    Ok(tape.relu(y))
}

pub fn declare_inception(prefix: &str, cin: usize, widths: &InceptionWidths) -> Vec<ParamDecl> {
    let mut decls = Vec::new();
    declare_conv(&mut decls, &format!("{prefix}.b1"), cin, widths.w1, 1);
    declare_conv(
        &mut decls,
        &format!("{prefix}.b3_reduce"),
        cin,
        widths.w3,
        1,
    );
    declare_conv(&mut decls, &format!("{prefix}.b3"), widths.w3, widths.w3, 3);
    declare_conv(
        &mut decls,
        &format!("{prefix}.b5_reduce"),
        cin,
        widths.w5pre,
        1,
    );
    declare_conv(
        &mut decls,
        &format!("{prefix}.b5"),
        widths.w5pre,
        widths.w5,
        3,
    );
    declare_conv(
        &mut decls,
        &format!("{prefix}.pool_proj"),
        cin,
        widths.wpool,
        1,
    );
    decls
}

/// Four ReLU branches concatenated in order: 1×1; 1×1 → 3×3; 1×1 → 3×3
/// with dilation 2 (in place of a 5×5); 3×3 max pool → 1×1. Spatial size is
/// preserved.
pub fn mini_inception_block<T: Scalar>(
    tape: &mut Tape<T>,
    params: &Bound,
    prefix: &str,
    x: Var,
) -> Result<Var> {
    let b1 = conv_relu(tape, params, &format!("{prefix}.b1"), x, POINTWISE)?;

    let r3 = conv_relu(tape, params, &format!("{prefix}.b3_reduce"), x, POINTWISE)?;
    let b3 = conv_relu(tape, params, &format!("{prefix}.b3"), r3, SAME_3X3)?;

    let r5 = conv_relu(tape, params, &format!("{prefix}.b5_reduce"), x, POINTWISE)?;
    let b5 = conv_relu(tape, params, &format!("{prefix}.b5"), r5, DILATED_3X3)?;

    let pooled = tape.pool2d(x, PoolKind::Max, PoolGeometry::padded(3, 1, 1))?;
    let bp = conv_relu(
        tape,
        params,
        &format!("{prefix}.pool_proj"),
        pooled,
        POINTWISE,
    )?;

    tape.concat_channels(&[b1, b3, b5, bp])
}

pub fn declare_attention(
    prefix: &str,
    channels: usize,
    module: &AttentionModuleSpec,
) -> Vec<ParamDecl> {
    let body = module.body_width(channels);
    let mut decls = Vec::new();
    declare_conv(
        &mut decls,
        &format!("{prefix}.body.down"),
        channels,
        body,
        3,
    );
    declare_conv(&mut decls, &format!("{prefix}.body.up"), body, channels, 3);
    for (i, head) in module.heads.iter().enumerate() {
        declare_conv(
            &mut decls,
            &format!("{prefix}.head{i}.fc1"),
            channels,
            head.hidden,
            1,
        );
        declare_conv(
            &mut decls,
            &format!("{prefix}.head{i}.fc2"),
            head.hidden,
            channels,
            1,
        );
    }
    decls
}

fn check_divisible<T: Scalar>(
    tape: &Tape<T>,
    x: Var,
    levels: usize,
    what: &'static str,
) -> Result<()> {
    let (_, _, h, w) = tape.value(x).dims4(what)?;
    let factor = 1usize << levels;
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::Config(format!(
            "{what}: spatial size {h}x{w} is not divisible by 2^{levels}"
        )));
    }
    Ok(())
}

/// Bottom-up/top-down body shared by every mask head: `depth` 2×2 max
/// pools, a 3×3 conv + ReLU at the bottleneck, nearest upsampling back to
/// the input size, then a 3×3 conv + ReLU. Output shape equals input shape.
pub fn hourglass_shared<T: Scalar>(
    tape: &mut Tape<T>,
    params: &Bound,
    prefix: &str,
    x: Var,
    depth: usize,
) -> Result<Var> {
    check_divisible(tape, x, depth, "hourglass_shared")?;
    let mut down = x;
    for _ in 0..depth {
        down = tape.pool2d(down, PoolKind::Max, HALVE)?;
    }
    let bottleneck = conv_relu(tape, params, &format!("{prefix}.body.down"), down, SAME_3X3)?;
    let up = tape.upsample(bottleneck, 1 << depth, UpsampleMode::Nearest)?;
    conv_relu(tape, params, &format!("{prefix}.body.up"), up, SAME_3X3)
}

/// `sigmoid(conv1×1(relu(conv1×1(s))))`, optionally evaluated at a coarser
/// scale and upsampled back. Every element lies in (0, 1) up to rounding.
pub fn mask_head<T: Scalar>(
    tape: &mut Tape<T>,
    params: &Bound,
    prefix: &str,
    shared: Var,
    head: &MaskHeadSpec,
    spatial_only: bool,
) -> Result<Var> {
    check_divisible(tape, shared, head.scale, "mask_head")?;
    let mut s = shared;
    for _ in 0..head.scale {
        s = tape.pool2d(s, PoolKind::Max, HALVE)?;
    }
    let hidden = conv_relu(tape, params, &format!("{prefix}.fc1"), s, POINTWISE)?;
    let mut logits = conv(tape, params, &format!("{prefix}.fc2"), hidden, POINTWISE)?;
    if spatial_only {
        logits = tape.channel_mean_expand(logits)?;
    }
    let mask = tape.sigmoid(logits);
    if head.scale == 0 {
        Ok(mask)
    } else {
        tape.upsample(mask, 1 << head.scale, UpsampleMode::Nearest)
    }
}

/// Shared body plus every head; several heads are averaged into one mask.
pub fn attention_mask<T: Scalar>(
    tape: &mut Tape<T>,
    params: &Bound,
    prefix: &str,
    features: Var,
    module: &AttentionModuleSpec,
) -> Result<Var> {
    let shared = hourglass_shared(tape, params, prefix, features, module.depth)?;
    let mut masks = Vec::with_capacity(module.heads.len());
    for (i, head) in module.heads.iter().enumerate() {
        masks.push(mask_head(
            tape,
            params,
            &format!("{prefix}.head{i}"),
            shared,
            head,
            module.spatial_only,
        )?);
    }
    let mut mask = masks[0];
    if masks.len() > 1 {
        for &m in &masks[1..] {
            mask = tape.add(mask, m)?;
        }
        let inv = tape.constant(Tensor::scalar(
            T::one() / T::from_usize(masks.len()).expect("head count"),
        ));
        mask = tape.mul(mask, inv)?;
    }
    Ok(mask)
}

/// `M ⊙ F` or `F + M ⊙ F`.
pub fn apply_attention<T: Scalar>(
    tape: &mut Tape<T>,
    features: Var,
    mask: Var,
    mode: MaskMode,
) -> Result<Var> {
    if tape.value(features).shape() != tape.value(mask).shape() {
        return Err(Error::shape(
            "apply_attention",
            format!(
                "mask {:?} does not match features {:?}",
                tape.value(mask).shape(),
                tape.value(features).shape()
            ),
        ));
    }
    let gated = tape.mul(mask, features)?;
    match mode {
        MaskMode::Multiply => Ok(gated),
        MaskMode::Residual => tape.add(features, gated),
    }
}
