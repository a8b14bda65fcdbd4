//! Layer primitives with hand-written backward passes, Adam, and a finite-difference checker.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod init;
pub mod param;
pub mod pool;
pub mod upsample;

pub use activation::{relu, relu_backward, relu_in_place};
pub use adam::{AdamHyper, AdamState};
pub use conv::{conv2d, conv2d_backward, Conv2d, Conv2dGrads};
pub use gradcheck::{grad_check, relative_error, Coords, GradCheckReport};
pub use init::he_init;
pub use param::{ParamId, ParamStore, ParamTensor};
pub use pool::{avg_pool2x, pool_down2x, pool_down2x_backward, MaxPoolOutput};
pub use upsample::{upsample2x, upsample2x_backward};
