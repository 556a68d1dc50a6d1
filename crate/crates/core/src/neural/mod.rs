//! Minimal feed-forward networks with reverse-mode gradients, BCE/MSE
//! losses, Adam, and soft target updates.

mod adam;
mod loss;
mod net;

pub use adam::{adam_step, AdamState};
pub use loss::{bce_loss, bce_loss_batch, mse_loss, PROB_CLAMP};
pub use net::{
    sigmoid, soft_update, Activation, DenseLayer, DenseNet, GradientTape, NetGrads, LEAKY_SLOPE,
};
