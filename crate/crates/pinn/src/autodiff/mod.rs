//! Reverse-mode differentiation for small dense networks.
//!
//! [`Tape`] records matrix operations; [`Network`] evaluates itself on a
//! tape and can carry input-direction tangents through the forward pass, so
//! that derivatives with respect to `(x, y, t)` remain differentiable with
//! respect to the parameters.

pub mod checkpoint;
pub mod network;
pub mod tape;

pub use checkpoint::{decode, encode, read_checkpoint, write_checkpoint, CheckpointError};
pub use network::{
    dropout_mask, Activation, DropoutMasks, Layer, NetError, NetVars, Network, Normalization, TapedOutput, INPUTS,
    OUTPUTS,
};
pub use tape::{softplus, Gradients, Tape, TapeError, Var};
