//! The nested multi-level U-Net: configuration, pyramid, fusion, forward/backward, loss, training step.

pub mod config;
pub mod fusion;
pub mod loss;
pub mod nested;
pub mod pyramid;
pub mod subnet;
pub mod train;

pub use config::{FusionMode, LossKind, NestedConfig};
pub use fusion::{fuse_features, fuse_features_backward, FusionGrads};
pub use loss::{multiscale_loss, multiscale_loss_grad};
pub use nested::{build_nested, count_params, NestedForward, NestedModel, Transfer};
pub use pyramid::{make_pyramid, Pyramid};
pub use subnet::{SubNet, SubnetGrads, SubnetTrace};
pub use train::{predict, Trainer};
