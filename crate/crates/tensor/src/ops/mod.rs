//! Forward and backward kernels as plain functions on tensors. The
//! [`Graph`](crate::Graph) records calls to these and replays the backward
//! halves in reverse.

mod activation;
mod conv;
mod linear;
mod loss;
mod norm;
mod pool;
mod resample;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, softmax_channels, softmax_channels_backward};
pub use conv::{conv2d, conv2d_backward, pointwise_conv, pointwise_conv_backward, Conv2dGrads, KERNEL};
pub use linear::{dense, dense_backward, DenseGrads};
pub use loss::{cross_entropy, cross_entropy_backward, mse, mse_backward, PROB_FLOOR};
pub use norm::{
    batch_norm_infer, batch_norm_infer_backward, batch_norm_train, batch_norm_train_backward,
    update_running_stats, BnCache, BnGrads, BnMode, BN_EPS, BN_MOMENTUM,
};
pub use pool::{max_pool2, max_pool2_backward};
pub use resample::{upsample2, upsample2_concat, upsample2_concat_backward};
