//! Monte Carlo FER estimation under optional post-channel perturbations.

use super::stats::FerStats;
use crate::attacks::{fgm_attack, pgd_attack, random_baseline, EnergyBudget, PgdConfig};
use crate::channel::{derive_seed, transmit, MessageMode, ReceivedFrame, SnrContext};
use crate::code::LinearCode;
use crate::decoders::Decoder;
use crate::error::{input_err, Result};
use crate::smoothing::SmoothingConfig;
use rayon::prelude::*;

/// What the channel output goes through before decoding.
pub enum Perturber<'a> {
    None,
    /// One shared δ for every frame.
    Universal(Vec<f64>),
    /// Gaussian direction with `‖δ‖ = α‖y‖`, independent per frame.
    Random {
        budget: EnergyBudget,
        seed: u64,
    },
    Fgm {
        source: &'a dyn Decoder,
        budget: EnergyBudget,
        smoothing: SmoothingConfig,
    },
    Pgd {
        source: &'a dyn Decoder,
        budget: EnergyBudget,
        smoothing: SmoothingConfig,
        pgd: PgdConfig,
    },
}

impl Perturber<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Universal(_) => "universal",
            Self::Random { .. } => "random",
            Self::Fgm { .. } => "fgm",
            Self::Pgd { .. } => "pgd",
        }
    }

    fn check(&self, code: &LinearCode) -> Result<()> {
        let n = code.n();
        match self {
            Self::Universal(d) if d.len() != n => {
                input_err(format!("perturbation has length {}, code has n = {n}", d.len()))
            }
            Self::Fgm { source, .. } | Self::Pgd { source, .. } if source.code().n() != n => input_err(format!(
                "source decoder {} works on n = {}, code has n = {n}",
                source.name(),
                source.code().n()
            )),
            _ => Ok(()),
        }
    }

    /// The decoder input `y + δ` for one frame; per-frame randomness is keyed by the
    /// frame's stream id.
    pub fn apply(&self, frame: &ReceivedFrame) -> Result<Vec<f64>> {
        let y = &frame.received;
        let delta = match self {
            Self::None => return Ok(y.clone()),
            Self::Universal(d) => d.clone(),
            Self::Random { budget, seed } => random_baseline(y.len(), budget.sample_epsilon(y), *seed, frame.stream),
            Self::Fgm {
                source,
                budget,
                smoothing,
            } => {
                let cfg = smoothing.with_seed(derive_seed(smoothing.seed, frame.stream));
                fgm_attack(*source, frame, budget, &cfg)?.delta
            }
            Self::Pgd {
                source,
                budget,
                smoothing,
                pgd,
            } => {
                let cfg = smoothing.with_seed(derive_seed(smoothing.seed, frame.stream));
                let p = PgdConfig {
                    seed: derive_seed(pgd.seed, frame.stream),
                    ..*pgd
                };
                pgd_attack(*source, frame, budget, &cfg, &p)?.delta
            }
        };
        Ok(y.iter().zip(&delta).map(|(a, b)| a + b).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FerConfig {
    pub snr_db: f64,
    /// Frame budget.
    pub frames: usize,
    /// Stop once this many frame errors were seen; `None` runs the full budget.
    pub target_errors: Option<usize>,
    pub seed: u64,
    pub message_mode: MessageMode,
    /// Frames simulated per parallel round.
    pub chunk: usize,
}

impl Default for FerConfig {
    fn default() -> Self {
        Self {
            snr_db: 5.0,
            frames: 1_000_000,
            target_errors: Some(100),
            seed: 0,
            message_mode: MessageMode::Uniform,
            chunk: 256,
        }
    }
}

impl FerConfig {
    pub fn fixed(snr_db: f64, frames: usize, seed: u64) -> Self {
        Self {
            snr_db,
            frames,
            target_errors: None,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.chunk == 0 {
            return input_err("frame budget and chunk size must be positive");
        }
        if self.target_errors == Some(0) {
            return input_err("target error count must be positive");
        }
        Ok(())
    }
}

/// Per-decoder statistics plus the per-frame error indicators for paired tests.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub stats: Vec<FerStats>,
    /// `errors[d][i]`: decoder `d` failed on frame `i`.
    pub errors: Vec<Vec<bool>>,
}

/// Decodes the same perturbed frames with every decoder.
///
/// Frame `i` is `transmit(code, snr, seed, i)`, so runs with the same seed see identical
/// channel outputs. With a target error count the run stops at the first frame after
/// which every decoder has reached it; the result does not depend on the thread count.
pub fn simulate(decoders: &[&dyn Decoder], perturber: &Perturber<'_>, cfg: &FerConfig) -> Result<SimulationRun> {
    cfg.validate()?;
    let Some(first) = decoders.first() else {
        return input_err("no decoders to simulate");
    };
    let code = first.code();
    if let Some(d) = decoders
        .iter()
        .find(|d| d.code().n() != code.n() || d.code().k() != code.k())
    {
        return input_err(format!("decoder {} is for a different code", d.name()));
    }
    perturber.check(code)?;
    let snr = SnrContext::for_code(code, cfg.snr_db)?;
    let mut frame_errors = vec![0usize; decoders.len()];
    let mut bit_errors = vec![0usize; decoders.len()];
    let mut errors: Vec<Vec<bool>> = vec![Vec::new(); decoders.len()];
    let mut frames = 0usize;
    let done = |fe: &[usize]| cfg.target_errors.is_some_and(|t| fe.iter().all(|&e| e >= t));
    'outer: while frames < cfg.frames {
        let end = (frames + cfg.chunk).min(cfg.frames);
        let chunk: Vec<Vec<usize>> = (frames..end)
            .into_par_iter()
            .map(|i| -> Result<Vec<usize>> {
                let frame = transmit(code, &snr, cfg.seed, i as u64, cfg.message_mode);
                let input = perturber.apply(&frame)?;
                Ok(decoders
                    .iter()
                    .map(|d| {
                        let out = d.decode(&input, snr.sigma2);
                        out.bits.iter().zip(&frame.codeword).filter(|(a, b)| a != b).count()
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        for wrong in chunk {
            frames += 1;
            for (d, &w) in wrong.iter().enumerate() {
                errors[d].push(w > 0);
                bit_errors[d] += w;
                frame_errors[d] += usize::from(w > 0);
            }
            if done(&frame_errors) {
                break 'outer;
            }
        }
    }
    let n = code.n();
    let stats = (0..decoders.len())
        .map(|d| FerStats::new(frames, frame_errors[d], bit_errors[d], n))
        .collect();
    Ok(SimulationRun { stats, errors })
}

/// FER of one decoder.
pub fn estimate_fer(decoder: &dyn Decoder, perturber: &Perturber<'_>, cfg: &FerConfig) -> Result<FerStats> {
    Ok(simulate(&[decoder], perturber, cfg)?.stats[0])
}
