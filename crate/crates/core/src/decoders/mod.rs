//! Uniform decoder interface and the classical reference decoders.

mod bp;
mod ml;
mod sc;

pub use bp::{min_sum_check_update, sum_product_check_update, BeliefPropagation, CheckRule};
pub use ml::MaximumLikelihood;
pub use sc::SuccessiveCancellation;

use crate::code::LinearCode;
use crate::error::{Error, Result};
use crate::neural::bce_loss;
use ndarray::{Array2, ArrayView2};

/// What a decoder can offer to an attacker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    /// Exposes analytic input gradients of its loss.
    pub differentiable: bool,
    /// Only loss values are available.
    pub black_box: bool,
}

impl Capabilities {
    pub const BLACK_BOX: Self = Self {
        differentiable: false,
        black_box: true,
    };
    pub const DIFFERENTIABLE: Self = Self {
        differentiable: true,
        black_box: false,
    };
}

/// Output of a single decode call.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Codeword estimate, length `n`.
    pub bits: Vec<u8>,
    /// Per-bit score; positive favours bit 0. `bits` is the hard decision on it.
    pub soft: Vec<f64>,
    pub iterations: usize,
    /// The estimate satisfies every parity check.
    pub converged: bool,
}

/// Hard decision on soft scores, `s ≥ 0 → 0`.
pub fn hard_decision(soft: &[f64]) -> Vec<u8> {
    soft.iter().map(|&s| u8::from(s < 0.0)).collect()
}

/// Probability that each bit is one given soft scores in LLR convention.
pub fn bit_one_probabilities(soft: &[f64]) -> Vec<f64> {
    soft.iter().map(|&s| 1.0 / (1.0 + s.exp())).collect()
}

/// Binary cross-entropy of a decoder's soft output against `target` bits.
pub fn soft_output_loss(soft: &[f64], target: &[u8]) -> f64 {
    bce_loss(&bit_one_probabilities(soft), target)
}

/// A channel decoder bound to one code.
pub trait Decoder: Send + Sync {
    fn name(&self) -> &str;

    fn code(&self) -> &LinearCode;

    fn capabilities(&self) -> Capabilities {
        Capabilities::BLACK_BOX
    }

    fn decode(&self, y: &[f64], sigma2: f64) -> DecodeResult;

    /// Loss `ℓ(f(u), target)` for every row `u` of `inputs`.
    fn losses(&self, inputs: ArrayView2<'_, f64>, target: &[u8], sigma2: f64) -> Vec<f64> {
        inputs
            .rows()
            .into_iter()
            .map(|row| {
                let u = row.to_vec();
                soft_output_loss(&self.decode(&u, sigma2).soft, target)
            })
            .collect()
    }

    /// Losses and their gradients with respect to each input row.
    fn losses_and_gradients(
        &self,
        _inputs: ArrayView2<'_, f64>,
        _target: &[u8],
        _sigma2: f64,
    ) -> Result<(Vec<f64>, Array2<f64>)> {
        Err(Error::Capability(format!(
            "decoder {} does not expose input gradients",
            self.name()
        )))
    }
}
