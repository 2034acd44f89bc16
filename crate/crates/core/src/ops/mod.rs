//! Raw numeric kernels (forward and vector-Jacobian products) operating on
//! [`Tensor`](crate::Tensor) values. The [`Tape`](crate::Tape) records calls
//! to these and replays their backward halves.

pub mod conv;
pub mod linalg;
pub mod pool;
pub mod resample;

pub use conv::ConvGeometry;
pub use pool::{PoolGeometry, PoolKind};
pub use resample::UpsampleMode;
