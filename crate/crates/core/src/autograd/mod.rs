//! Reverse-mode gradients for the fixed model graph and a
//! finite-difference harness that checks them.

pub mod backward;
pub mod gradcheck;

pub use backward::{
    batch_gradients, batch_loss, example_loss, layer_backward, model_backward, Example, GradientSet,
};
pub use gradcheck::{finite_diff_check, finite_diff_check_with, GradCheckOptions, GradCheckReport};
