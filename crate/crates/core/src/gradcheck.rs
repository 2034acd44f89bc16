//! Central finite-difference verification of the tape's analytic gradients.
//!
//! Checks always run in double precision. The relative error of one
//! coordinate is `|a - n| / max(|a|, |n|, 1e-8)` for analytic gradient `a`
//! and numerical estimate `n = (f(x + eps) - f(x - eps)) / (2 eps)`.

use std::time::{Duration, Instant};

use crate::error::Result;
use crate::nn::blocks::{
    apply_attention, attention_mask, declare_attention, declare_inception, hourglass_shared,
    mask_head, mini_inception_block,
};
use crate::nn::params::{Bound, ParamDecl};
use crate::nn::spec::{AttentionModuleSpec, InceptionWidths, MaskHeadSpec, MaskMode};
use crate::ops::{ConvGeometry, PoolGeometry, PoolKind, UpsampleMode};
use crate::rng::Rng;
use crate::tape::{Fault, Tape, Var};
use crate::tensor::Tensor;
use crate::Tensor64;

pub const DEFAULT_EPS: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-6;
pub const DEFAULT_TRIALS: usize = 100;
/// Default magnitude floor of the relative-error denominator.
pub const DEFAULT_FLOOR: f64 = 1e-8;
/// Fresh draws allowed per trial when a probe crosses a ReLU or max-pool kink.
const MAX_REDRAWS: usize = 50;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    relative_error_floored(analytic, numeric, DEFAULT_FLOOR)
}

/// `|a - n| / max(|a|, |n|, floor)`: below `floor` the comparison becomes
/// absolute, which keeps finite-difference rounding noise on near-zero
/// gradients from dominating.
pub fn relative_error_floored(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckResult {
    /// Worst error over every coordinate.
    pub max_rel_error: f64,
    /// Worst error over coordinates whose probes stay on one smooth piece.
    pub max_rel_error_smooth: f64,
    pub coordinates: usize,
    /// Coordinates where a `±eps` probe changed a ReLU sign or max-pool
    /// winner, so the finite difference straddles a kink and is not a valid
    /// reference.
    pub kink_coordinates: usize,
    pub crossed_kink: bool,
    /// `(input, index, analytic, numeric)` of the worst smooth coordinate.
    pub worst_smooth: Option<(usize, usize, f64, f64)>,
}

/// Scalar-valued function of tape inputs.
pub type CheckFn = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

pub fn grad_check<F>(f: F, inputs: &[Tensor64], eps: f64) -> Result<GradCheckResult>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    grad_check_with(&f, inputs, eps, None)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOptions {
    pub eps: f64,
    pub floor: f64,
    pub fault: Option<Fault>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            eps: DEFAULT_EPS,
            floor: DEFAULT_FLOOR,
            fault: None,
        }
    }
}

/// [`grad_check`] with an optional injected backward fault.
pub fn grad_check_with<F>(
    f: &F,
    inputs: &[Tensor64],
    eps: f64,
    fault: Option<Fault>,
) -> Result<GradCheckResult>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + ?Sized,
{
    let opts = CheckOptions {
        eps,
        fault,
        ..CheckOptions::default()
    };
    grad_check_opts(f, inputs, &opts)
}

pub fn grad_check_opts<F>(
    f: &F,
    inputs: &[Tensor64],
    opts: &CheckOptions,
) -> Result<GradCheckResult>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + ?Sized,
{
    let (eps, fault) = (opts.eps, opts.fault);
    let mut tape = Tape::new().with_fault(fault).tracking_kinks();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let base_pattern = tape.activation_pattern();
    let grads = tape.backward(loss)?;

    let eval = |probe: &[Tensor64]| -> Result<(f64, u64)> {
        let mut tape = Tape::new().tracking_kinks();
        let vars: Vec<Var> = probe.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape.value(out).data()[0], tape.activation_pattern()))
    };

    let mut probe = inputs.to_vec();
    let mut worst: f64 = 0.0;
    let mut worst_smooth: f64 = 0.0;
    let mut coordinates = 0;
    let mut kink_coordinates = 0;
    let mut worst_at = None;
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("every input requires grad");
        for j in 0..inputs[i].numel() {
            let original = inputs[i].data()[j];
            probe[i].data_mut()[j] = original + eps;
            let (plus, p_plus) = eval(&probe)?;
            probe[i].data_mut()[j] = original - eps;
            let (minus, p_minus) = eval(&probe)?;
            probe[i].data_mut()[j] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error_floored(analytic.data()[j], numeric, opts.floor);
            worst = worst.max(err);
            if p_plus != base_pattern || p_minus != base_pattern {
                kink_coordinates += 1;
            } else if err >= worst_smooth {
                worst_smooth = err;
                worst_at = Some((i, j, analytic.data()[j], numeric));
            }
            coordinates += 1;
        }
    }
    Ok(GradCheckResult {
        max_rel_error: worst,
        max_rel_error_smooth: worst_smooth,
        coordinates,
        kink_coordinates,
        crossed_kink: kink_coordinates > 0,
        worst_smooth: worst_at,
    })
}

/// One random problem for a registered op: inputs plus the scalar function.
pub struct Instance {
    pub inputs: Vec<Tensor64>,
    pub f: Box<CheckFn>,
}

pub struct OpCase {
    pub name: &'static str,
    pub make: fn(&mut Rng) -> Instance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpReport {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub trials: usize,
    /// Draws discarded because a probe crossed a kink.
    pub redraws: usize,
    pub elapsed: Duration,
}

impl OpReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }
}

/// Runs every registered case `trials` times. Trial `t` of op `name` draws
/// from `Rng::derive(t, name)`, so the suite is reproducible.
pub fn run_suite(trials: usize, eps: f64, fault: Option<Fault>) -> Result<Vec<OpReport>> {
    registry()
        .iter()
        .map(|case| run_case(case, trials, eps, fault))
        .collect()
}

pub fn run_case(case: &OpCase, trials: usize, eps: f64, fault: Option<Fault>) -> Result<OpReport> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut redraws = 0;
    for trial in 0..trials {
        let mut rng = Rng::derive(trial as u64, case.name);
        let mut result = None;
        for _ in 0..=MAX_REDRAWS {
            let inst = (case.make)(&mut rng);
            let r = grad_check_with(&*inst.f, &inst.inputs, eps, fault)?;
            if !r.crossed_kink {
                result = Some(r);
                break;
            }
            redraws += 1;
        }
        let r = result.ok_or_else(|| {
            crate::Error::Input(format!(
                "{}: every draw of trial {trial} straddled a kink",
                case.name
            ))
        })?;
        worst = worst.max(r.max_rel_error);
    }
    Ok(OpReport {
        name: case.name,
        max_rel_error: worst,
        trials,
        redraws,
        elapsed: start.elapsed(),
    })
}

fn random(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor64 {
    let n = shape.iter().product();
    Tensor::from_f64(
        shape,
        &(0..n).map(|_| rng.uniform(lo, hi)).collect::<Vec<_>>(),
    )
    .expect("valid shape")
}

/// Projection weights with magnitude in [0.5, 1.5) and random sign.
fn projection(rng: &mut Rng, shape: &[usize]) -> Tensor64 {
    let n = shape.iter().product();
    let v: Vec<f64> = (0..n)
        .map(|_| {
            let m = rng.uniform(0.5, 1.5);
            if rng.bernoulli(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_f64(shape, &v).expect("valid shape")
}

/// Reduces an op output to a scalar with a fixed random projection.
fn project(tape: &mut Tape<f64>, out: Var, weights: &Tensor64) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

/// Builds an instance whose output shape is only known after a dry run.
fn projected<G>(rng: &mut Rng, inputs: Vec<Tensor64>, op: G) -> Instance
where
    G: Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'static,
{
    let mut dry = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| dry.constant(t.clone())).collect();
    let shape = dry_shape(&mut dry, &vars, &op);
    let weights = projection(rng, &shape);
    Instance {
        inputs,
        f: Box::new(move |tape, vars| {
            let out = op(tape, vars)?;
            project(tape, out, &weights)
        }),
    }
}

fn dry_shape<G>(tape: &mut Tape<f64>, vars: &[Var], op: &G) -> Vec<usize>
where
    G: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let out = op(tape, vars).expect("registered instance is well-formed");
    tape.value(out).shape().to_vec()
}

fn random_params(rng: &mut Rng, decls: &[ParamDecl]) -> (Vec<String>, Vec<Tensor64>) {
    decls
        .iter()
        .map(|d| (d.name.clone(), random(rng, &d.shape, -0.8, 0.8)))
        .unzip()
}

fn conv_instance(rng: &mut Rng, x: &[usize], w: &[usize], geom: ConvGeometry) -> Instance {
    let inputs = vec![
        random(rng, x, -1.0, 1.0),
        random(rng, w, -1.0, 1.0),
        random(rng, &w[..1], -0.5, 0.5),
    ];
    projected(rng, inputs, move |t, v| t.conv2d(v[0], v[1], v[2], geom))
}

fn composite<G>(rng: &mut Rng, feature: Vec<Tensor64>, decls: Vec<ParamDecl>, op: G) -> Instance
where
    G: Fn(&mut Tape<f64>, Var, &Bound) -> Result<Var> + 'static,
{
    let (names, params) = random_params(rng, &decls);
    let mut inputs = feature;
    inputs.extend(params);
    projected(rng, inputs, move |t, v| {
        let bound = Bound::from_vars(&names, v[1..].to_vec());
        op(t, v[0], &bound)
    })
}

/// Every differentiable op and composite block, in report order.
pub fn registry() -> Vec<OpCase> {
    vec![
        OpCase {
            name: "conv2d",
            make: |r| conv_instance(r, &[2, 2, 5, 5], &[3, 2, 3, 3], ConvGeometry::new(1, 1, 1)),
        },
        OpCase {
            name: "conv2d_strided",
            make: |r| conv_instance(r, &[1, 2, 6, 6], &[2, 2, 3, 3], ConvGeometry::new(2, 1, 1)),
        },
        OpCase {
            name: "conv2d_dilated",
            make: |r| conv_instance(r, &[1, 2, 7, 7], &[2, 2, 3, 3], ConvGeometry::new(1, 2, 2)),
        },
        OpCase {
            name: "conv2d_pointwise",
            make: |r| conv_instance(r, &[2, 3, 3, 3], &[2, 3, 1, 1], ConvGeometry::default()),
        },
        OpCase {
            name: "max_pool",
            make: |r| {
                let x = random(r, &[1, 2, 4, 4], -1.0, 1.0);
                projected(r, vec![x], |t, v| {
                    t.pool2d(v[0], PoolKind::Max, PoolGeometry::new(2, 2))
                })
            },
        },
        OpCase {
            name: "max_pool_padded",
            make: |r| {
                let x = random(r, &[1, 2, 4, 4], -1.0, 1.0);
                projected(r, vec![x], |t, v| {
                    t.pool2d(v[0], PoolKind::Max, PoolGeometry::padded(3, 1, 1))
                })
            },
        },
        OpCase {
            name: "avg_pool",
            make: |r| {
                let x = random(r, &[1, 2, 4, 4], -1.0, 1.0);
                projected(r, vec![x], |t, v| {
                    t.pool2d(v[0], PoolKind::Avg, PoolGeometry::new(2, 2))
                })
            },
        },
        OpCase {
            name: "upsample_nearest",
            make: |r| {
                let x = random(r, &[1, 2, 2, 3], -1.0, 1.0);
                projected(r, vec![x], |t, v| {
                    t.upsample(v[0], 2, UpsampleMode::Nearest)
                })
            },
        },
        OpCase {
            name: "upsample_bilinear",
            make: |r| {
                let x = random(r, &[1, 2, 3, 3], -1.0, 1.0);
                projected(r, vec![x], |t, v| {
                    t.upsample(v[0], 2, UpsampleMode::Bilinear)
                })
            },
        },
        OpCase {
            name: "relu",
            make: |r| {
                let x = random(r, &[2, 3, 2, 2], -1.0, 1.0);
                projected(r, vec![x], |t, v| Ok(t.relu(v[0])))
            },
        },
        OpCase {
            name: "sigmoid",
            make: |r| {
                let x = random(r, &[2, 3, 2, 2], -3.0, 3.0);
                projected(r, vec![x], |t, v| Ok(t.sigmoid(v[0])))
            },
        },
        OpCase {
            name: "add",
            make: |r| {
                let a = random(r, &[2, 3, 2, 2], -1.0, 1.0);
                let b = random(r, &[3, 2, 2], -1.0, 1.0);
                projected(r, vec![a, b], |t, v| t.add(v[0], v[1]))
            },
        },
        OpCase {
            name: "mul",
            make: |r| {
                let a = random(r, &[2, 2], -1.0, 1.0);
                let b = random(r, &[2, 2], -1.0, 1.0);
                projected(r, vec![a, b], |t, v| t.mul(v[0], v[1]))
            },
        },
        OpCase {
            name: "mul_broadcast",
            make: |r| {
                let a = random(r, &[2, 3, 2, 2], -1.0, 1.0);
                let b = random(r, &[3, 2, 2], -1.0, 1.0);
                let s = random(r, &[1], -1.0, 1.0);
                projected(r, vec![a, b, s], |t, v| {
                    let ab = t.mul(v[0], v[1])?;
                    t.mul(ab, v[2])
                })
            },
        },
        OpCase {
            name: "dense",
            make: |r| {
                let x = random(r, &[3, 4], -1.0, 1.0);
                let w = random(r, &[4, 5], -1.0, 1.0);
                let b = random(r, &[5], -0.5, 0.5);
                projected(r, vec![x, w, b], |t, v| t.dense(v[0], v[1], v[2]))
            },
        },
        OpCase {
            name: "global_avg_pool",
            make: |r| {
                let x = random(r, &[2, 3, 3, 3], -1.0, 1.0);
                projected(r, vec![x], |t, v| t.global_avg_pool(v[0]))
            },
        },
        OpCase {
            name: "concat_channels",
            make: |r| {
                let a = random(r, &[1, 1, 2, 2], -1.0, 1.0);
                let b = random(r, &[1, 2, 2, 2], -1.0, 1.0);
                projected(r, vec![a, b], |t, v| t.concat_channels(&[v[0], v[1], v[0]]))
            },
        },
        OpCase {
            name: "channel_mean_expand",
            make: |r| {
                let x = random(r, &[2, 3, 2, 2], -1.0, 1.0);
                projected(r, vec![x], |t, v| t.channel_mean_expand(v[0]))
            },
        },
        OpCase {
            name: "softmax_cross_entropy",
            make: |r| {
                let logits = random(r, &[4, 3], -2.0, 2.0);
                let labels: Vec<usize> = (0..4).map(|_| r.below(3)).collect();
                Instance {
                    inputs: vec![logits],
                    f: Box::new(move |t, v| t.softmax_cross_entropy(v[0], &labels)),
                }
            },
        },
        OpCase {
            name: "mini_inception_block",
            make: |r| {
                let widths = InceptionWidths::new(2, 2, 1, 2, 1);
                let x = random(r, &[1, 3, 5, 5], -1.0, 1.0);
                composite(r, vec![x], declare_inception("b", 3, &widths), |t, x, p| {
                    mini_inception_block(t, p, "b", x)
                })
            },
        },
        OpCase {
            name: "hourglass",
            make: |r| {
                let module = AttentionModuleSpec {
                    body_channels: Some(3),
                    ..AttentionModuleSpec::default()
                };
                let x = random(r, &[1, 2, 8, 8], -1.0, 1.0);
                let decls: Vec<ParamDecl> = declare_attention("a", 2, &module)
                    .into_iter()
                    .filter(|d| d.name.starts_with("a.body"))
                    .collect();
                composite(r, vec![x], decls, |t, x, p| {
                    hourglass_shared(t, p, "a", x, 2)
                })
            },
        },
        OpCase {
            name: "mask_head",
            make: |r| {
                let head = MaskHeadSpec {
                    hidden: 3,
                    scale: 0,
                };
                let module = AttentionModuleSpec {
                    heads: vec![head],
                    ..AttentionModuleSpec::default()
                };
                let s = random(r, &[1, 2, 4, 4], -1.0, 1.0);
                let decls: Vec<ParamDecl> = declare_attention("a", 2, &module)
                    .into_iter()
                    .filter(|d| d.name.starts_with("a.head0"))
                    .collect();
                composite(r, vec![s], decls, move |t, s, p| {
                    mask_head(t, p, "a.head0", s, &head, false)
                })
            },
        },
        OpCase {
            name: "mask_head_spatial_coarse",
            make: |r| {
                let head = MaskHeadSpec {
                    hidden: 2,
                    scale: 1,
                };
                let module = AttentionModuleSpec {
                    heads: vec![head],
                    ..AttentionModuleSpec::default()
                };
                let s = random(r, &[1, 3, 4, 4], -1.0, 1.0);
                let decls: Vec<ParamDecl> = declare_attention("a", 3, &module)
                    .into_iter()
                    .filter(|d| d.name.starts_with("a.head0"))
                    .collect();
                composite(r, vec![s], decls, move |t, s, p| {
                    mask_head(t, p, "a.head0", s, &head, true)
                })
            },
        },
        OpCase {
            name: "apply_attention_multiply",
            make: |r| {
                let f = random(r, &[1, 2, 3, 3], -1.0, 1.0);
                let m = random(r, &[1, 2, 3, 3], 0.05, 0.95);
                projected(r, vec![f, m], |t, v| {
                    apply_attention(t, v[0], v[1], MaskMode::Multiply)
                })
            },
        },
        OpCase {
            name: "apply_attention_residual",
            make: |r| {
                let f = random(r, &[1, 2, 3, 3], -1.0, 1.0);
                let m = random(r, &[1, 2, 3, 3], 0.05, 0.95);
                projected(r, vec![f, m], |t, v| {
                    apply_attention(t, v[0], v[1], MaskMode::Residual)
                })
            },
        },
        OpCase {
            name: "attention_module",
            make: |r| {
                let module = AttentionModuleSpec {
                    body_channels: Some(2),
                    heads: vec![
                        MaskHeadSpec {
                            hidden: 2,
                            scale: 0,
                        },
                        MaskHeadSpec {
                            hidden: 2,
                            scale: 1,
                        },
                    ],
                    ..AttentionModuleSpec::default()
                };
                let x = random(r, &[1, 2, 4, 4], -1.0, 1.0);
                let decls = declare_attention("a", 2, &module);
                composite(r, vec![x], decls, move |t, x, p| {
                    let mask = attention_mask(t, p, "a", x, &module)?;
                    apply_attention(t, x, mask, module.mode)
                })
            },
        },
    ]
}
