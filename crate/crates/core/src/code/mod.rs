//! Binary linear codes: representation, encoding, syndromes and the bundled corpus.

mod alist;
mod catalog;
mod polar;

pub use alist::{load_alist, parse_alist, to_alist};
pub use catalog::{bundled_alist, bundled_ids, resolve_code};
pub use polar::{bhattacharyya_parameters, build_polar, polar_transform, PolarLayout};

use crate::error::{input_err, Error, Result};
use crate::gf2::{pack_bits, unpack_bits, Gf2Matrix};
use std::fmt;

/// Family tag recorded with every code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodeFamily {
    Hamming,
    Ldpc,
    Polar,
    Repetition,
    Custom,
}

impl fmt::Display for CodeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CodeFamily::Hamming => "hamming",
            CodeFamily::Ldpc => "ldpc",
            CodeFamily::Polar => "polar",
            CodeFamily::Repetition => "repetition",
            CodeFamily::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// An `(n, k)` binary linear code with generator `G` (k×n) and parity-check `H`.
///
/// Codes are immutable once built. When `G` is derived from a parity-check matrix it is
/// systematic on `systematic_positions`: the message occupies those codeword positions in
/// order, while the external bit order stays the one of `H`.
#[derive(Clone)]
pub struct LinearCode {
    id: String,
    n: usize,
    k: usize,
    g: Gf2Matrix,
    h: Gf2Matrix,
    family: CodeFamily,
    systematic_positions: Option<Vec<usize>>,
    polar: Option<PolarLayout>,
}

impl LinearCode {
    /// Builds a code from its parity-check matrix, deriving `G` by Gaussian elimination.
    ///
    /// Redundant rows of `h` are kept (message-passing decoders use every check); the
    /// dimension is `k = n - rank(H)`.
    pub fn from_parity_check(id: impl Into<String>, family: CodeFamily, h: Gf2Matrix) -> Result<Self> {
        let n = h.cols();
        let (g, free) = h.null_space();
        let k = g.rows();
        if k == 0 || k >= n {
            return input_err(format!("degenerate code: n = {n}, k = {k}"));
        }
        let code = Self {
            id: id.into(),
            n,
            k,
            g,
            h,
            family,
            systematic_positions: Some(free),
            polar: None,
        };
        code.check_invariants()?;
        Ok(code)
    }

    /// Builds a code from explicit generator and parity-check matrices.
    pub fn from_matrices(id: impl Into<String>, family: CodeFamily, g: Gf2Matrix, h: Gf2Matrix) -> Result<Self> {
        let code = Self {
            id: id.into(),
            n: g.cols(),
            k: g.rows(),
            g,
            h,
            family,
            systematic_positions: None,
            polar: None,
        };
        code.check_invariants()?;
        Ok(code)
    }

    pub(crate) fn with_polar_layout(mut self, layout: PolarLayout) -> Self {
        self.polar = Some(layout);
        self
    }

    fn check_invariants(&self) -> Result<()> {
        if self.k == 0 || self.k >= self.n {
            return input_err(format!("need 0 < k < n, got n = {}, k = {}", self.n, self.k));
        }
        if self.h.cols() != self.n {
            return input_err("G and H disagree on n");
        }
        if self.g.rank() != self.k {
            return input_err("generator matrix is rank deficient");
        }
        if self.h.rank() != self.n - self.k {
            return input_err("parity-check rank differs from n - k");
        }
        if !self.g.mul(&self.h.transpose()).is_zero() {
            return input_err("G·Hᵀ ≠ 0");
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of syndrome bits, `n - k`.
    pub fn redundancy(&self) -> usize {
        self.n - self.k
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn family(&self) -> CodeFamily {
        self.family
    }

    pub fn generator(&self) -> &Gf2Matrix {
        &self.g
    }

    pub fn parity_check(&self) -> &Gf2Matrix {
        &self.h
    }

    pub fn systematic_positions(&self) -> Option<&[usize]> {
        self.systematic_positions.as_deref()
    }

    pub fn polar_layout(&self) -> Option<&PolarLayout> {
        self.polar.as_ref()
    }

    /// `x = m·G` over GF(2).
    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.k {
            return input_err(format!("message length {} ≠ k = {}", message.len(), self.k));
        }
        Ok(unpack_bits(&self.g.left_mul_packed(&pack_bits(message)), self.n))
    }

    /// `s = H·y_bᵀ` over GF(2); one bit per row of `H`.
    pub fn syndrome(&self, hard_bits: &[u8]) -> Result<Vec<u8>> {
        if hard_bits.len() != self.n {
            return input_err(format!("word length {} ≠ n = {}", hard_bits.len(), self.n));
        }
        Ok(unpack_bits(&self.h.mul_packed(&pack_bits(hard_bits)), self.h.rows()))
    }

    pub fn is_codeword(&self, hard_bits: &[u8]) -> bool {
        hard_bits.len() == self.n && self.h.mul_packed(&pack_bits(hard_bits)).iter().all(|&w| w == 0)
    }

    /// Recovers the message of a systematic codeword.
    pub fn message_of(&self, codeword: &[u8]) -> Result<Vec<u8>> {
        let pos = self
            .systematic_positions
            .as_ref()
            .ok_or_else(|| Error::Input(format!("code {} is not systematic", self.id)))?;
        if codeword.len() != self.n {
            return input_err("codeword length mismatch");
        }
        Ok(pos.iter().map(|&p| codeword[p]).collect())
    }
}

impl fmt::Debug for LinearCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearCode")
            .field("id", &self.id)
            .field("n", &self.n)
            .field("k", &self.k)
            .field("family", &self.family)
            .finish()
    }
}

/// Hard decision: `y_i ≥ 0 → 0`, `y_i < 0 → 1`.
pub fn hard_demodulate(y: &[f64]) -> Vec<u8> {
    y.iter().map(|&v| u8::from(v < 0.0)).collect()
}
