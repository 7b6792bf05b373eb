//! Feedforward network machinery: batched ReLU MLPs with exact backprop,
//! Adam, gradient clipping, soft target updates and the dueling head.

mod adam;
mod mlp;
mod ops;
mod scalar;

pub use adam::AdamState;
pub use mlp::{Activation, ForwardTrace, LayerShape, MlpSpec, ParameterVector};
pub use ops::{
    clip_gradients, dueling_backward_into, dueling_combine, dueling_combine_into, polyak_update,
};
pub use scalar::Scalar;
