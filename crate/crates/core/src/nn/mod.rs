//! Minimal dense/convolutional numerical core with reverse-mode gradients
//! and an Adam optimizer. Layers expose explicit forward/backward pairs;
//! the model stack in [`crate::model`] wires them into a tape.

mod gradcheck;
mod ops;
mod optim;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use ops::{
    activation_backward, activation_forward, conv2d_backward, conv2d_forward, dense_backward,
    dense_forward, global_avg_pool_backward, global_avg_pool_forward, softmax_xent_backward,
    softmax_xent_forward, Activation, Padding, SoftmaxXent, SELU_ALPHA, SELU_LAMBDA,
};
pub use optim::Adam;
pub use tensor::{Parameter, Tensor};
