//! CIFAR-10 ingestion, normalization and augmentation.

pub mod augment;
pub mod cifar;
pub mod preprocess;
pub mod synthetic;

pub use augment::{augment, flip_horizontal, pad_crop, AugmentConfig};
pub use cifar::{
    load_cifar10, parse_records, split_files, Cifar10Dataset, Split, NUM_CLASSES, PIXELS,
    RECORD_BYTES, SIDE,
};
pub use preprocess::{compute_channel_stats, preprocess, ChannelStats};
pub use synthetic::synthetic_dataset;
