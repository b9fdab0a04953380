//! Reverse-mode automatic differentiation, optimisation and initialisation.

mod adam;
mod init;
mod ops;
mod tape;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use init::{glorot_bound, glorot_init, glorot_uniform};
pub use ops::{
    concat_cols, cross_entropy, pointwise_activation, row_merge, segment_softmax, Activation, EdgeList,
    DEFAULT_LEAKY_SLOPE,
};
pub use tape::{Gradients, Tape, Var};
