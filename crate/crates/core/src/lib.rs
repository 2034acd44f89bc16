//! Desk-scale attention diagnostics for small convolutional classifiers.
//!
//! The crate is generic over the floating-point scalar ([`Scalar`], implemented
//! for `f32` and `f64`). Training runs in single precision; double precision is
//! used by the finite-difference gradient checker. Concrete aliases for both
//! are exported below.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod ops;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
pub use nn::{build_network, Network, NetworkSpec, StagePlacement};
pub use rng::Rng;
pub use scalar::{Precision, Scalar};
pub use tape::{Activation, Elementwise, Fault, Gradients, Tape, Var};
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Tape32 = Tape<f32>;
pub type Tape64 = Tape<f64>;
pub type Network32 = Network<f32>;
pub type Network64 = Network<f64>;
