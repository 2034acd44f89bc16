//! The mini inception classifier and the sharable hourglass attention module.

pub mod blocks;
pub mod network;
pub mod params;
pub mod spec;

pub use blocks::{
    apply_attention, attention_mask, declare_attention, declare_inception, hourglass_shared,
    mask_head, mini_inception_block,
};
pub use network::{
    build_network, declare_network, is_attention_param, parse_taps, ActivationRecord,
    AttentionRecord, Network,
};
pub use params::{Bound, Init, ParamDecl, ParamStore};
pub use spec::{
    AttentionModuleSpec, AttentionPlacement, HeadSpec, InceptionWidths, MaskHeadSpec, MaskMode,
    NetworkSpec, StagePlacement, StemSpec,
};
