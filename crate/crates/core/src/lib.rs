//! Nested multi-level U-Net for defocus deblurring of microscopy images.
//!
//! A pyramid of downsampled blurred inputs is processed coarse to fine. Each
//! level is a U-Net; the decoder features of level `n + 1` are merged into the
//! encoder of level `n` either by addition ([`FusionMode::Residual`]) or by
//! channel concatenation ([`FusionMode::Concat`]).

pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pad;
pub mod rng;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{FusionMode, LossKind, NestedConfig, NestedModel};
pub use tensor::{Scalar, Shape4, Tensor4};
