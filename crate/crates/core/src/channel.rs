//! BPSK over AWGN with reproducible, counter-addressed random streams.

use crate::code::LinearCode;
use crate::error::{input_err, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random stream for `(seed, stream)`; any stream can be regenerated in isolation.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a base seed with a tag (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `σ² = (2 R · 10^{Eb/N0 / 10})⁻¹`.
pub fn snr_to_sigma2(ebno_db: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate < 1.0) {
        return input_err(format!("rate must lie in (0, 1), got {rate}"));
    }
    Ok(1.0 / (2.0 * rate * 10f64.powf(ebno_db / 10.0)))
}

/// Operating point of the channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrContext {
    pub ebno_db: f64,
    pub rate: f64,
    pub sigma2: f64,
}

impl SnrContext {
    pub fn new(ebno_db: f64, rate: f64) -> Result<Self> {
        Ok(Self {
            ebno_db,
            rate,
            sigma2: snr_to_sigma2(ebno_db, rate)?,
        })
    }

    pub fn for_code(code: &LinearCode, ebno_db: f64) -> Result<Self> {
        Self::new(ebno_db, code.rate())
    }

    /// Overrides the noise variance directly (e.g. a near-noiseless channel).
    pub fn with_sigma2(self, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return input_err("sigma2 must be positive");
        }
        Ok(Self { sigma2, ..self })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MessageMode {
    #[default]
    Uniform,
    AllZero,
}

/// `x_s = 1 − 2c`.
pub fn modulate(codeword: &[u8]) -> Vec<f64> {
    codeword.iter().map(|&c| 1.0 - 2.0 * f64::from(c & 1)).collect()
}

/// One transmitted frame and everything needed to audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub message: Vec<u8>,
    pub codeword: Vec<u8>,
    pub symbols: Vec<f64>,
    pub noise: Vec<f64>,
    pub received: Vec<f64>,
    pub snr: SnrContext,
    pub seed: u64,
    pub stream: u64,
}

/// Sends one frame on stream `(seed, stream)`.
pub fn transmit(code: &LinearCode, snr: &SnrContext, seed: u64, stream: u64, mode: MessageMode) -> ReceivedFrame {
    let mut rng = stream_rng(seed, stream);
    let message: Vec<u8> = match mode {
        MessageMode::Uniform => (0..code.k()).map(|_| rng.random_range(0..2u8)).collect(),
        MessageMode::AllZero => vec![0; code.k()],
    };
    let codeword = code.encode(&message).expect("message has length k");
    let symbols = modulate(&codeword);
    let sigma = snr.sigma();
    let noise: Vec<f64> = (0..code.n())
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let received = symbols.iter().zip(&noise).map(|(s, z)| s + z).collect();
    ReceivedFrame {
        message,
        codeword,
        symbols,
        noise,
        received,
        snr: *snr,
        seed,
        stream,
    }
}

/// Fills `out` with i.i.d. `N(0, std²)` samples.
pub fn fill_gaussian(rng: &mut impl Rng, std: f64, out: &mut [f64]) {
    for v in out {
        *v = std * rng.sample::<f64, _>(StandardNormal);
    }
}
