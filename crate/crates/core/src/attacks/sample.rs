//! Per-frame attacks.

use super::{project_l2, scale_to, EnergyBudget};
use crate::channel::{derive_seed, stream_rng, ReceivedFrame};
use crate::decoders::Decoder;
use crate::error::Result;
use crate::smoothing::{estimate_gradient, offset, smoothed_loss, DecoderLoss, LossOracle, SmoothingConfig};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A perturbation and how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub delta: Vec<f64>,
    pub epsilon: f64,
    /// The smoothed gradient vanished, so `delta` is zero.
    pub degenerate: bool,
    /// Smoothed loss at `y + delta`, when the attack evaluated it.
    pub objective: Option<f64>,
}

/// Gaussian direction scaled to norm exactly `epsilon`.
pub fn random_baseline(n: usize, epsilon: f64, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Some(d) = scale_to(&v, epsilon) {
            return d;
        }
    }
}

/// Uniform draw from the ball of radius `epsilon`.
pub fn random_in_ball(n: usize, epsilon: f64, rng: &mut impl Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let r = epsilon * rng.random::<f64>().powf(1.0 / n as f64);
    scale_to(&v, r).unwrap_or_else(|| vec![0.0; n])
}

/// One normalized step `δ = ε ĝ/‖ĝ‖` from the smoothed gradient at `δ = 0`.
pub fn fgm(oracle: &dyn LossOracle, y: &[f64], epsilon: f64, cfg: &SmoothingConfig) -> Result<Perturbation> {
    let g = estimate_gradient(oracle, y, cfg)?;
    Ok(match scale_to(&g.gradient, epsilon) {
        Some(delta) => Perturbation {
            delta,
            epsilon,
            degenerate: false,
            objective: None,
        },
        None => Perturbation {
            delta: vec![0.0; y.len()],
            epsilon,
            degenerate: true,
            objective: Some(g.loss_mean),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdConfig {
    pub steps: usize,
    /// Step size is `step_factor · ε / steps`.
    pub step_factor: f64,
    /// Start from a uniform draw in the ball; otherwise from `δ = 0`.
    pub random_start: bool,
    pub seed: u64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            step_factor: 1.2,
            random_start: true,
            seed: 0,
        }
    }
}

impl PgdConfig {
    pub fn step_size(&self, epsilon: f64) -> f64 {
        self.step_factor * epsilon / self.steps as f64
    }
}

/// Projected ascent from a random point of the ball (or the origin) with normalized steps; returns the
/// iterate with the largest smoothed loss seen along the way.
pub fn pgd(
    oracle: &dyn LossOracle,
    y: &[f64],
    epsilon: f64,
    cfg: &SmoothingConfig,
    pgd_cfg: &PgdConfig,
) -> Result<Perturbation> {
    let n = y.len();
    let eta = pgd_cfg.step_size(epsilon);
    let mut rng = stream_rng(pgd_cfg.seed, 0);
    let mut delta = if pgd_cfg.random_start {
        random_in_ball(n, epsilon, &mut rng)
    } else {
        vec![0.0; n]
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut any_step = false;
    for t in 0..=pgd_cfg.steps {
        let step_cfg = cfg.with_seed(derive_seed(cfg.seed, t as u64));
        let point = offset(y, &delta);
        if t == pgd_cfg.steps {
            let value = smoothed_loss(oracle, &point, &step_cfg)?;
            if best.as_ref().is_none_or(|(b, _)| value > *b) {
                best = Some((value, delta.clone()));
            }
            break;
        }
        let g = estimate_gradient(oracle, &point, &step_cfg)?;
        if best.as_ref().is_none_or(|(b, _)| g.loss_mean > *b) {
            best = Some((g.loss_mean, delta.clone()));
        }
        if let Some(step) = scale_to(&g.gradient, eta) {
            any_step = true;
            let moved: Vec<f64> = delta.iter().zip(&step).map(|(d, s)| d + s).collect();
            delta = project_l2(&moved, epsilon);
        }
    }
    let (value, delta) = best.expect("at least one iterate");
    Ok(Perturbation {
        delta,
        epsilon,
        degenerate: !any_step,
        objective: Some(value),
    })
}

/// FGM against `decoder` on one frame, with `ε = α‖y‖`.
pub fn fgm_attack(
    decoder: &dyn Decoder,
    frame: &ReceivedFrame,
    budget: &EnergyBudget,
    cfg: &SmoothingConfig,
) -> Result<Perturbation> {
    let loss = DecoderLoss::new(decoder, &frame.codeword, frame.snr.sigma2);
    fgm(&loss, &frame.received, budget.sample_epsilon(&frame.received), cfg)
}

/// PGD against `decoder` on one frame, with `ε = α‖y‖`.
pub fn pgd_attack(
    decoder: &dyn Decoder,
    frame: &ReceivedFrame,
    budget: &EnergyBudget,
    cfg: &SmoothingConfig,
    pgd_cfg: &PgdConfig,
) -> Result<Perturbation> {
    let loss = DecoderLoss::new(decoder, &frame.codeword, frame.snr.sigma2);
    pgd(
        &loss,
        &frame.received,
        budget.sample_epsilon(&frame.received),
        cfg,
        pgd_cfg,
    )
}
