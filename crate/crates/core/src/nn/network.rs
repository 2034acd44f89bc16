use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::nn::blocks::{
    apply_attention, attention_mask, conv, declare_attention, declare_inception,
    mini_inception_block,
};
use crate::nn::params::{declare_conv, declare_dense, Bound, ParamDecl, ParamStore};
use crate::nn::spec::{NetworkSpec, StagePlacement};
use crate::ops::{ConvGeometry, PoolGeometry, PoolKind};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const ATTENTION_PREFIX: &str = "attention";

fn block_prefix(index: usize) -> String {
    format!("block{}", index + 1)
}

/// Every parameter the spec needs, in forward order.
pub fn declare_network(spec: &NetworkSpec) -> Vec<ParamDecl> {
    let mut decls = Vec::new();
    declare_conv(
        &mut decls,
        "stem",
        spec.input_channels,
        spec.stem.out_channels,
        spec.stem.kernel,
    );
    for (i, widths) in spec.blocks.iter().enumerate() {
        decls.extend(declare_inception(
            &block_prefix(i),
            spec.block_input_channels(i),
            widths,
        ));
        if let Some(att) = spec
            .attention
            .as_ref()
            .filter(|a| a.stage.block_index() == i)
        {
            decls.extend(declare_attention(
                ATTENTION_PREFIX,
                spec.block_output_channels(i),
                &att.module,
            ));
        }
    }
    declare_dense(
        &mut decls,
        "classifier",
        spec.features(),
        spec.head.num_classes,
    );
    decls
}

pub fn is_attention_param(name: &str) -> bool {
    name.starts_with(ATTENTION_PREFIX) && name[ATTENTION_PREFIX.len()..].starts_with('.')
}

/// Tensors captured during a forward pass. All entries are copies, so later
/// computation never changes them.
#[derive(Clone, Debug, Default)]
pub struct ActivationRecord<T> {
    /// Block outputs, before any attention is applied.
    pub taps: BTreeMap<StagePlacement, Tensor<T>>,
    pub attention: Option<AttentionRecord<T>>,
}

#[derive(Clone, Debug)]
pub struct AttentionRecord<T> {
    pub stage: StagePlacement,
    pub mask: Tensor<T>,
    /// Features after the mask is applied.
    pub attended: Tensor<T>,
}

/// Parses tap names, rejecting unknown ones.
pub fn parse_taps<S: AsRef<str>>(names: &[S]) -> Result<BTreeSet<StagePlacement>> {
    names.iter().map(|n| n.as_ref().parse()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    params: ParamStore<T>,
}

/// Validates the spec and initializes its parameters from `seed`.
pub fn build_network<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<Network<T>> {
    spec.validate()?;
    Ok(Network {
        spec: spec.clone(),
        params: ParamStore::initialize(&declare_network(spec), seed),
    })
}

impl<T: Scalar> Network<T> {
    /// Wraps existing parameters, checking names and shapes against the spec.
    pub fn from_params(spec: &NetworkSpec, params: ParamStore<T>) -> Result<Self> {
        spec.validate()?;
        let decls = declare_network(spec);
        if decls.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "spec declares {} parameters but {} were supplied",
                decls.len(),
                params.len()
            )));
        }
        for decl in &decls {
            match params.get(&decl.name) {
                None => {
                    return Err(Error::Checkpoint(format!(
                        "parameter '{}' is missing",
                        decl.name
                    )))
                }
                Some(t) if t.shape() != decl.shape.as_slice() => {
                    return Err(Error::Checkpoint(format!(
                        "parameter '{}' has shape {:?}, expected {:?}",
                        decl.name,
                        t.shape(),
                        decl.shape
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(Network {
            spec: spec.clone(),
            params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.numel()
    }

    /// Zeroes every mask-head weight and sets the final mask-head bias to
    /// `logit`, so each mask element equals `sigmoid(logit)`.
    pub fn set_constant_mask(&mut self, logit: T) -> Result<()> {
        let att = self
            .spec
            .attention
            .as_ref()
            .ok_or_else(|| Error::Config("the network has no attention module".into()))?;
        for i in 0..att.module.heads.len() {
            for (name, value) in [
                ("fc1.weight", T::zero()),
                ("fc1.bias", T::zero()),
                ("fc2.weight", T::zero()),
                ("fc2.bias", logit),
            ] {
                let full = format!("{ATTENTION_PREFIX}.head{i}.{name}");
                let t = self
                    .params
                    .get_mut(&full)
                    .ok_or_else(|| Error::Config(format!("missing parameter '{full}'")))?;
                t.data_mut().fill(value);
            }
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        self.params.bind(tape, trainable)
    }

    /// Records the full forward pass for `input` (`[N, C, S, S]`) and returns
    /// the logits node plus snapshots of the requested taps.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        params: &Bound,
        input: Var,
        taps: &BTreeSet<StagePlacement>,
    ) -> Result<(Var, ActivationRecord<T>)> {
        let spec = &self.spec;
        let (_, c, h, w) = tape.value(input).dims4("forward")?;
        if c != spec.input_channels || h != spec.input_size || w != spec.input_size {
            return Err(Error::shape(
                "forward",
                format!(
                    "input {:?} does not match the spec's {}x{}x{}",
                    tape.value(input).shape(),
                    spec.input_channels,
                    spec.input_size,
                    spec.input_size
                ),
            ));
        }
        let mut record = ActivationRecord::default();
        let pad = spec.stem.kernel / 2;
        let stem = conv(tape, params, "stem", input, ConvGeometry::new(1, pad, 1))?;
        let mut x = tape.relu(stem);

        for (i, stage) in StagePlacement::ALL.iter().copied().enumerate() {
            if i > 0 {
                x = tape.pool2d(x, PoolKind::Max, PoolGeometry::new(2, 2))?;
            }
            x = mini_inception_block(tape, params, &block_prefix(i), x)?;
            if taps.contains(&stage) {
                record.taps.insert(stage, tape.value(x).clone());
            }
            if let Some(att) = spec.attention.as_ref().filter(|a| a.stage == stage) {
                let mask = attention_mask(tape, params, ATTENTION_PREFIX, x, &att.module)?;
                x = apply_attention(tape, x, mask, att.module.mode)?;
                record.attention = Some(AttentionRecord {
                    stage,
                    mask: tape.value(mask).clone(),
                    attended: tape.value(x).clone(),
                });
            }
        }

        let pooled = tape.global_avg_pool(x)?;
        let w = params.var("classifier.weight")?;
        let b = params.var("classifier.bias")?;
        let logits = tape.dense(pooled, w, b)?;
        Ok((logits, record))
    }

    /// Inference-only forward of a batch.
    pub fn forward_with_taps(
        &self,
        batch: &Tensor<T>,
        taps: &BTreeSet<StagePlacement>,
    ) -> Result<(Tensor<T>, ActivationRecord<T>)> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let input = tape.constant(batch.clone());
        let (logits, record) = self.forward(&mut tape, &params, input, taps)?;
        Ok((tape.value(logits).clone(), record))
    }
}
