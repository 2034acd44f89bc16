//! Declarative description of the classifier and its attention module.
//!
//! Serialized as JSON; unknown keys are rejected and omitted keys take the
//! defaults below.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where the attention module sits: right after block 1, 2 or 3. The same
/// names identify activation taps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StagePlacement {
    Early,
    Middle,
    Later,
}

impl StagePlacement {
    pub const ALL: [StagePlacement; 3] = [
        StagePlacement::Early,
        StagePlacement::Middle,
        StagePlacement::Later,
    ];

    pub fn block_index(self) -> usize {
        match self {
            StagePlacement::Early => 0,
            StagePlacement::Middle => 1,
            StagePlacement::Later => 2,
        }
    }

    pub fn from_block_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            StagePlacement::Early => "early",
            StagePlacement::Middle => "middle",
            StagePlacement::Later => "later",
        }
    }
}

impl fmt::Display for StagePlacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StagePlacement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "early" => Ok(StagePlacement::Early),
            "middle" => Ok(StagePlacement::Middle),
            "later" => Ok(StagePlacement::Later),
            other => Err(Error::Usage(format!(
                "unknown tap/stage '{other}', expected early, middle or later"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// `F' = M ⊙ F`
    #[default]
    Multiply,
    /// `F' = F + M ⊙ F`
    Residual,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StemSpec {
    pub out_channels: usize,
    pub kernel: usize,
}

impl Default for StemSpec {
    fn default() -> Self {
        StemSpec {
            out_channels: 16,
            kernel: 3,
        }
    }
}

/// Branch widths of a mini inception block. The 3×3 branch reduces to `w3`
/// channels before its 3×3 conv; the dilated branch reduces to `w5pre`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InceptionWidths {
    pub w1: usize,
    pub w3: usize,
    pub w5pre: usize,
    pub w5: usize,
    pub wpool: usize,
}

impl InceptionWidths {
    pub const fn new(w1: usize, w3: usize, w5pre: usize, w5: usize, wpool: usize) -> Self {
        InceptionWidths {
            w1,
            w3,
            w5pre,
            w5,
            wpool,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.w1 + self.w3 + self.w5 + self.wpool
    }

    fn validate(&self, block: &str) -> Result<()> {
        let all = [self.w1, self.w3, self.w5pre, self.w5, self.wpool];
        if all.contains(&0) {
            return Err(Error::Config(format!(
                "{block}: every inception width must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskHeadSpec {
    /// Width of the first 1×1 conv.
    pub hidden: usize,
    /// Extra 2×2 max pools applied to the shared body output before this
    /// head; the mask is upsampled back afterwards.
    #[serde(default)]
    pub scale: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionModuleSpec {
    /// Number of 2×2 max pools on the bottom-up leg of the shared hourglass.
    pub depth: usize,
    /// Bottleneck width of the hourglass; the masked feature map's channel
    /// count when absent.
    pub body_channels: Option<usize>,
    pub heads: Vec<MaskHeadSpec>,
    pub mode: MaskMode,
    /// Average the head output over channels before the sigmoid, giving one
    /// spatial mask shared by every channel.
    pub spatial_only: bool,
}

impl Default for AttentionModuleSpec {
    fn default() -> Self {
        AttentionModuleSpec {
            depth: 2,
            body_channels: None,
            heads: vec![MaskHeadSpec {
                hidden: 8,
                scale: 0,
            }],
            mode: MaskMode::Multiply,
            spatial_only: false,
        }
    }
}

impl AttentionModuleSpec {
    /// Two heads branching off one body, the second at half resolution.
    pub fn multi_scale() -> Self {
        AttentionModuleSpec {
            heads: vec![
                MaskHeadSpec {
                    hidden: 8,
                    scale: 0,
                },
                MaskHeadSpec {
                    hidden: 8,
                    scale: 1,
                },
            ],
            ..Self::default()
        }
    }

    pub fn body_width(&self, channels: usize) -> usize {
        self.body_channels.unwrap_or(channels)
    }

    /// Checks the module against a `channels × size × size` feature map.
    pub fn validate(&self, channels: usize, size: usize) -> Result<()> {
        if self.heads.is_empty() {
            return Err(Error::Config(
                "attention: at least one mask head is required".into(),
            ));
        }
        if self.body_channels == Some(0) {
            return Err(Error::Config(
                "attention: body_channels must be positive".into(),
            ));
        }
        if channels == 0 {
            return Err(Error::Config(
                "attention: masked feature map has no channels".into(),
            ));
        }
        let divisible = |levels: usize| {
            1usize
                .checked_shl(levels as u32)
                .is_some_and(|f| f <= size && size.is_multiple_of(f))
        };
        if !divisible(self.depth) {
            return Err(Error::Config(format!(
                "attention: spatial size {size} is not divisible by 2^{} (hourglass depth)",
                self.depth
            )));
        }
        for (i, head) in self.heads.iter().enumerate() {
            if head.hidden == 0 {
                return Err(Error::Config(format!(
                    "attention.head{i}: hidden width must be positive"
                )));
            }
            if !divisible(head.scale) {
                return Err(Error::Config(format!(
                    "attention.head{i}: spatial size {size} is not divisible by 2^{}",
                    head.scale
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionPlacement {
    pub stage: StagePlacement,
    #[serde(default)]
    pub module: AttentionModuleSpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadSpec {
    pub num_classes: usize,
}

impl Default for HeadSpec {
    fn default() -> Self {
        HeadSpec { num_classes: 10 }
    }
}

/// Stem conv, three mini inception blocks with a 2×2 max pool between
/// consecutive blocks, optional attention after one block, then global
/// average pooling and a dense classifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub input_size: usize,
    pub stem: StemSpec,
    pub blocks: Vec<InceptionWidths>,
    pub attention: Option<AttentionPlacement>,
    pub head: HeadSpec,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            input_channels: 3,
            input_size: 32,
            stem: StemSpec::default(),
            blocks: vec![
                InceptionWidths::new(8, 8, 4, 4, 4),
                InceptionWidths::new(8, 12, 4, 8, 4),
                InceptionWidths::new(16, 16, 8, 8, 8),
            ],
            attention: None,
            head: HeadSpec::default(),
        }
    }
}

impl NetworkSpec {
    pub const NUM_BLOCKS: usize = 3;

    /// Input channel count of block `index`.
    pub fn block_input_channels(&self, index: usize) -> usize {
        if index == 0 {
            self.stem.out_channels
        } else {
            self.blocks[index - 1].out_channels()
        }
    }

    pub fn block_output_channels(&self, index: usize) -> usize {
        self.blocks[index].out_channels()
    }

    /// Side length of block `index`'s (square) feature maps.
    pub fn block_size(&self, index: usize) -> usize {
        self.input_size >> index
    }

    pub fn features(&self) -> usize {
        self.blocks.last().map_or(0, InceptionWidths::out_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.len() != Self::NUM_BLOCKS {
            return Err(Error::Config(format!(
                "expected exactly {} inception blocks, got {}",
                Self::NUM_BLOCKS,
                self.blocks.len()
            )));
        }
        if self.input_channels == 0 {
            return Err(Error::Config("input_channels must be positive".into()));
        }
        if self.stem.out_channels == 0 || self.stem.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "stem: need positive channels and an odd kernel, got {:?}",
                self.stem
            )));
        }
        let reductions = 1 << (Self::NUM_BLOCKS - 1);
        if self.input_size == 0 || !self.input_size.is_multiple_of(reductions) {
            return Err(Error::Config(format!(
                "input_size {} must be a positive multiple of {reductions}",
                self.input_size
            )));
        }
        for (i, widths) in self.blocks.iter().enumerate() {
            widths.validate(&format!("block{}", i + 1))?;
        }
        if self.head.num_classes == 0 {
            return Err(Error::Config("head: num_classes must be positive".into()));
        }
        if let Some(att) = &self.attention {
            let idx = att.stage.block_index();
            att.module
                .validate(self.block_output_channels(idx), self.block_size(idx))
                .map_err(|e| match e {
                    Error::Config(msg) => {
                        Error::Config(format!("block{} ({} stage): {msg}", idx + 1, att.stage))
                    }
                    other => other,
                })?;
        }
        Ok(())
    }

    /// Returns a copy with `module` inserted right after the block named by
    /// `stage`. Mask heads are sized to that block's output channels when
    /// the network is built.
    pub fn place_attention(
        &self,
        stage: StagePlacement,
        module: AttentionModuleSpec,
    ) -> Result<NetworkSpec> {
        if let Some(existing) = &self.attention {
            return Err(Error::Config(format!(
                "attention is already placed at the {} stage",
                existing.stage
            )));
        }
        let mut spec = self.clone();
        spec.attention = Some(AttentionPlacement { stage, module });
        spec.validate()?;
        Ok(spec)
    }

    pub fn without_attention(&self) -> NetworkSpec {
        NetworkSpec {
            attention: None,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("network spec: {e}")))
    }
}
