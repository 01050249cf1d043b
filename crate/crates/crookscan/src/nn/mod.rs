//! Residual dilated 1D convolutional classifier with a from-scratch
//! reverse pass, Adam, and ensembling.
//!
//! ```text
//! x (3 x 256) -> 1x1 projection -> block 1 -> block 2 -> mean over positions
//!             -> dense + ReLU -> dense -> sigmoid
//!
//! block:  h0 = input
//!         a_l = relu(conv_dilated_l(h_l))      "same" zero padding
//!         h_{l+1} = h_l + a_l                  residual
//!         out = sum_l skip_l(a_l)              1x1 skip projections
//! ```

mod adam;
mod arch;
mod ensemble;
mod network;
mod train;

pub use adam::{Adam, AdamState};
pub use arch::{ArchConfig, ModelParams, TensorInfo, TensorKind};
pub use ensemble::Ensemble;
pub use network::{backward, bce_loss, bce_with_logit, forward, logit, sigmoid, to_input, Workspace};
pub use train::{mean_loss, train_submodel, train_submodel_with_history, TrainConfig, TrainOutcome};
