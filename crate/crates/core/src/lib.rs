//! Adversarial robustness evaluation for channel decoders.
//!
//! Codes and channel, classical and neural decoders, Gaussian-smoothed gradient
//! estimation, sample-wise and universal attacks, and the evaluation harness.

pub mod attacks;
pub mod channel;
pub mod code;
pub mod decoders;
pub mod error;
pub mod gf2;
pub mod harness;
pub mod neural;
pub mod smoothing;

pub use error::{Error, Result};
