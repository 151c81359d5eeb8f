use super::{Capabilities, DecodeResult, Decoder};
use crate::code::LinearCode;
use crate::error::{Error, Result};
use std::sync::Arc;

/// Exact LLR of `a ⊕ b`, in the numerically stable Jacobian form.
fn boxplus(a: f64, b: f64) -> f64 {
    let s = a.signum() * b.signum();
    s * a.abs().min(b.abs()) + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
}

/// Successive-cancellation decoder for natural-order polar codes.
#[derive(Debug, Clone)]
pub struct SuccessiveCancellation {
    code: Arc<LinearCode>,
    frozen: Vec<bool>,
}

impl SuccessiveCancellation {
    pub fn new(code: Arc<LinearCode>) -> Result<Self> {
        let frozen = code
            .polar_layout()
            .ok_or_else(|| Error::Input(format!("SC decoding needs a polar code, got {}", code.id())))?
            .frozen
            .clone();
        Ok(Self { code, frozen })
    }

    /// Returns the re-encoded partial sums `x` for the block whose LLRs are `llr`.
    fn recurse(llr: &[f64], frozen: &[bool]) -> Vec<u8> {
        let n = llr.len();
        if n == 1 {
            let bit = if frozen[0] { 0 } else { u8::from(llr[0] < 0.0) };
            return vec![bit];
        }
        let h = n / 2;
        let (left, right) = llr.split_at(h);
        let upper: Vec<f64> = left.iter().zip(right).map(|(&a, &b)| boxplus(a, b)).collect();
        let xa = Self::recurse(&upper, &frozen[..h]);
        let lower: Vec<f64> = left
            .iter()
            .zip(right)
            .zip(&xa)
            .map(|((&a, &b), &x)| b + if x == 0 { a } else { -a })
            .collect();
        let xb = Self::recurse(&lower, &frozen[h..]);
        let mut out: Vec<u8> = xa.iter().zip(&xb).map(|(a, b)| a ^ b).collect();
        out.extend_from_slice(&xb);
        out
    }
}

impl Decoder for SuccessiveCancellation {
    fn name(&self) -> &str {
        "sc"
    }

    fn code(&self) -> &LinearCode {
        &self.code
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::BLACK_BOX
    }

    /// The soft output is the channel reliability `|2y/σ²|` signed by the decided bit.
    fn decode(&self, y: &[f64], sigma2: f64) -> DecodeResult {
        let llr: Vec<f64> = y.iter().map(|&v| 2.0 * v / sigma2).collect();
        let bits = Self::recurse(&llr, &self.frozen);
        let soft = bits
            .iter()
            .zip(&llr)
            .map(|(&b, &l)| {
                let mag = l.abs().max(1e-12);
                if b == 0 {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        DecodeResult {
            bits,
            soft,
            iterations: 1,
            converged: true,
        }
    }
}
