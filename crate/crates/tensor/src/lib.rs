//! Small dense-tensor engine: row-major tensors generic over the float type,
//! the handful of CNN layers needed for image regression and segmentation,
//! a recording [`Graph`] for reverse-mode gradients, and Adam.

mod adam;
mod error;
pub mod gradcheck;
mod graph;
pub mod init;
pub mod ops;
mod params;
mod scalar;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use ops::BnMode;
pub use params::{ParamEntry, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;
