use super::{Capabilities, DecodeResult, Decoder};
use crate::channel::modulate;
use crate::code::LinearCode;
use crate::error::{Error, Result};
use std::sync::Arc;

/// Largest dimension the exhaustive search accepts.
pub const MAX_ML_DIMENSION: usize = 16;

/// Exhaustive maximum-likelihood decoder (maximum correlation with the BPSK image).
///
/// Codeword `j` carries message bits `m_i = (j >> i) & 1`; ties resolve to the lowest `j`.
#[derive(Debug, Clone)]
pub struct MaximumLikelihood {
    code: Arc<LinearCode>,
    codewords: Vec<Vec<u8>>,
    images: Vec<Vec<f64>>,
}

impl MaximumLikelihood {
    pub fn new(code: Arc<LinearCode>) -> Result<Self> {
        let k = code.k();
        if k > MAX_ML_DIMENSION {
            return Err(Error::Refused(format!(
                "exhaustive ML over 2^{k} codewords exceeds the 2^{MAX_ML_DIMENSION} limit"
            )));
        }
        let codewords: Vec<Vec<u8>> = (0..1usize << k)
            .map(|j| {
                let msg: Vec<u8> = (0..k).map(|i| ((j >> i) & 1) as u8).collect();
                code.encode(&msg).expect("message has length k")
            })
            .collect();
        let images = codewords.iter().map(|c| modulate(c)).collect();
        Ok(Self {
            code,
            codewords,
            images,
        })
    }

    pub fn codewords(&self) -> &[Vec<u8>] {
        &self.codewords
    }
}

impl Decoder for MaximumLikelihood {
    fn name(&self) -> &str {
        "ml"
    }

    fn code(&self) -> &LinearCode {
        &self.code
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::BLACK_BOX
    }

    /// Soft output is the max-log LLR `(max corr | c_i=0 − max corr | c_i=1) / σ²`.
    fn decode(&self, y: &[f64], sigma2: f64) -> DecodeResult {
        let n = self.code.n();
        let mut best = 0usize;
        let mut best_corr = f64::NEG_INFINITY;
        let mut best0 = vec![f64::NEG_INFINITY; n];
        let mut best1 = vec![f64::NEG_INFINITY; n];
        for (j, (img, cw)) in self.images.iter().zip(&self.codewords).enumerate() {
            let corr: f64 = img.iter().zip(y).map(|(a, b)| a * b).sum();
            if corr > best_corr {
                best_corr = corr;
                best = j;
            }
            for i in 0..n {
                let slot = if cw[i] == 0 { &mut best0[i] } else { &mut best1[i] };
                if corr > *slot {
                    *slot = corr;
                }
            }
        }
        let bits = self.codewords[best].clone();
        let soft = (0..n)
            .map(|i| {
                let d = (best0[i] - best1[i]) / sigma2;
                // keep the sign of the decision when the two hypotheses tie
                if d == 0.0 || d.is_nan() {
                    if bits[i] == 0 {
                        1e-12
                    } else {
                        -1e-12
                    }
                } else {
                    d
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{transmit, MessageMode, SnrContext};
    use crate::code::{build_polar, resolve_code};
    use crate::decoders::hard_decision;

    #[test]
    fn refuses_large_dimension() {
        let code = Arc::new(resolve_code("ldpc_49_24").unwrap());
        assert!(matches!(MaximumLikelihood::new(code), Err(Error::Refused(_))));
        let code = Arc::new(build_polar(32, 16, 2.0).unwrap());
        assert!(MaximumLikelihood::new(code).is_ok());
    }

    /// Hard-decision syndrome decoding with a coset-leader table is ML for the BSC;
    /// on a Hamming code the soft ML decision must agree whenever the received word is
    /// within one flip of a codeword and that flip is the least reliable position.
    #[test]
    fn matches_syndrome_table_on_weak_single_errors() {
        let code = Arc::new(resolve_code("hamming_7_4").unwrap());
        let ml = MaximumLikelihood::new(code.clone()).unwrap();
        let h = code.parity_check();
        for m in 0..16u8 {
            let msg: Vec<u8> = (0..4).map(|i| (m >> i) & 1).collect();
            let c = code.encode(&msg).unwrap();
            for flip in 0..7 {
                let mut y = modulate(&c);
                for v in y.iter_mut() {
                    *v *= 2.0;
                }
                y[flip] = -0.1 * y[flip];
                let hard = hard_decision(&y);
                let s = code.syndrome(&hard).unwrap();
                // the coset leader of syndrome s is the column of H equal to s
                let pos = (0..7)
                    .find(|&j| (0..h.rows()).all(|r| u8::from(h.get(r, j)) == s[r]))
                    .unwrap();
                let mut corrected = hard.clone();
                corrected[pos] ^= 1;
                assert_eq!(ml.decode(&y, 1.0).bits, corrected);
                assert_eq!(corrected, c);
            }
        }
    }

    #[test]
    fn decision_maximizes_correlation_and_soft_sign_agrees() {
        let code = Arc::new(resolve_code("hamming_15_11").unwrap());
        let ml = MaximumLikelihood::new(code.clone()).unwrap();
        let snr = SnrContext::for_code(&code, 1.0).unwrap();
        for s in 0..30 {
            let f = transmit(&code, &snr, 21, s, MessageMode::Uniform);
            let r = ml.decode(&f.received, snr.sigma2);
            let corr = |c: &[u8]| -> f64 { modulate(c).iter().zip(&f.received).map(|(a, b)| a * b).sum() };
            let best = corr(&r.bits);
            assert!(ml.codewords().iter().all(|c| corr(c) <= best + 1e-12));
            assert_eq!(hard_decision(&r.soft), r.bits);
        }
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let code = Arc::new(resolve_code("repetition_3_1").unwrap());
        let ml = MaximumLikelihood::new(code).unwrap();
        let r = ml.decode(&[0.0, 0.0, 0.0], 1.0);
        assert_eq!(r.bits, vec![0, 0, 0]);
        assert!(r.soft.iter().all(|&s| s > 0.0));
    }
}
