//! Universal perturbations shared by every frame.

use super::eigen::{jacobi_eigen, power_iteration};
use super::{project_l2, scale_to, AttackArtifact, AttackKind, EnergyBudget};
use crate::channel::{derive_seed, stream_rng, ReceivedFrame};
use crate::decoders::Decoder;
use crate::error::{input_err, Result};
use crate::smoothing::{
    estimate_gradient, offset, resolve_estimator, smoothed_loss, DecoderLoss, LossOracle, SmoothingConfig,
};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;

/// Power-iteration tolerance on the relative residual `‖Σu − λu‖ / λ`.
pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERATIONS: usize = 10_000;

/// `F̂_N(δ) = (1/N) Σ g̃_i(y_i + δ)` with per-frame smoothing seeds.
pub fn empirical_objective(
    oracles: &[&dyn LossOracle],
    points: &[Vec<f64>],
    delta: &[f64],
    cfg: &SmoothingConfig,
) -> Result<f64> {
    let values: Result<Vec<f64>> = oracles
        .par_iter()
        .zip(points.par_iter())
        .enumerate()
        .map(|(i, (o, y))| smoothed_loss(*o, &offset(y, delta), &cfg.with_seed(derive_seed(cfg.seed, i as u64))))
        .collect();
    let values = values?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

fn check_frames(oracles: &[&dyn LossOracle], points: &[Vec<f64>], min: usize) -> Result<usize> {
    if oracles.len() != points.len() {
        return input_err("one loss per frame is required");
    }
    if points.len() < min {
        return input_err(format!("need at least {min} frames, got {}", points.len()));
    }
    let n = points[0].len();
    if points.iter().any(|p| p.len() != n) || oracles.iter().any(|o| o.dim() != n) {
        return input_err("frames and losses must share one dimension");
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UapConfig {
    pub batches: usize,
    /// Each update moves `lr · ε` along the normalized batch gradient.
    pub lr: f64,
    /// Frames per batch; `None` splits the frames evenly over `batches`.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for UapConfig {
    fn default() -> Self {
        Self {
            batches: 50,
            lr: 0.05,
            batch_size: None,
            seed: 0,
        }
    }
}

/// Stochastic projected ascent on `F̂_N`, starting from `δ = 0`.
///
/// Frames are shuffled once and consumed cyclically in mini-batches; each update
/// follows the normalized mean of the frames' smoothed gradients at `y_i + δ`.
pub fn uap_grad(
    oracles: &[&dyn LossOracle],
    points: &[Vec<f64>],
    epsilon: f64,
    cfg: &SmoothingConfig,
    uap: &UapConfig,
) -> Result<Vec<f64>> {
    let n = check_frames(oracles, points, 1)?;
    let count = points.len();
    let b = uap.batch_size.unwrap_or(count.div_ceil(uap.batches.max(1))).max(1);
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut stream_rng(uap.seed, 0));
    let mut delta = vec![0.0; n];
    let mut cursor = 0;
    for t in 0..uap.batches {
        let batch: Vec<usize> = (0..b).map(|j| order[(cursor + j) % count]).collect();
        cursor = (cursor + b) % count;
        let grads: Result<Vec<Vec<f64>>> = batch
            .par_iter()
            .map(|&i| {
                let seed = derive_seed(derive_seed(cfg.seed, t as u64), i as u64);
                estimate_gradient(oracles[i], &offset(&points[i], &delta), &cfg.with_seed(seed)).map(|g| g.gradient)
            })
            .collect();
        let mut mean = vec![0.0; n];
        for g in grads? {
            for (m, v) in mean.iter_mut().zip(g) {
                *m += v / b as f64;
            }
        }
        if let Some(step) = scale_to(&mean, uap.lr * epsilon) {
            let moved: Vec<f64> = delta.iter().zip(&step).map(|(d, s)| d + s).collect();
            delta = project_l2(&moved, epsilon);
        }
    }
    Ok(delta)
}

/// Per-frame smoothed gradients `q_i` at `δ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBatch {
    /// `N × n`, row `i` is `q_i`.
    pub q: Array2<f64>,
    pub norms: Vec<f64>,
    /// Largest observed `‖q_i‖`.
    pub max_norm: f64,
}

impl GradientBatch {
    pub fn from_rows(q: Array2<f64>) -> Self {
        let norms: Vec<f64> = q.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        let max_norm = norms.iter().copied().fold(0.0, f64::max);
        Self { q, norms, max_norm }
    }

    pub fn estimate(oracles: &[&dyn LossOracle], points: &[Vec<f64>], cfg: &SmoothingConfig) -> Result<Self> {
        let n = check_frames(oracles, points, 1)?;
        let rows: Result<Vec<Vec<f64>>> = oracles
            .par_iter()
            .zip(points.par_iter())
            .enumerate()
            .map(|(i, (o, y))| {
                estimate_gradient(*o, y, &cfg.with_seed(derive_seed(cfg.seed, i as u64))).map(|g| g.gradient)
            })
            .collect();
        let rows = rows?;
        let q =
            Array2::from_shape_vec((rows.len(), n), rows.into_iter().flatten().collect()).expect("rows have length n");
        Ok(Self::from_rows(q))
    }

    pub fn len(&self) -> usize {
        self.q.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.q.nrows() == 0
    }

    /// `Σ̂ = (1/N) Σ q_i q_iᵀ`.
    pub fn second_moment(&self) -> Array2<f64> {
        self.q.t().dot(&self.q) / self.len().max(1) as f64
    }
}

/// Top eigenpair of `Σ̂` and the gap to the next eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalDirection {
    pub direction: Vec<f64>,
    pub eigenvalue: f64,
    pub eigengap: f64,
    /// Power iteration did not converge and the dense solver was used.
    pub used_fallback: bool,
}

/// Top eigenvector of the batch's second-moment matrix.
pub fn principal_direction(batch: &GradientBatch, seed: u64) -> PrincipalDirection {
    let sigma = batch.second_moment();
    if let Some(top) = power_iteration(&sigma, POWER_TOLERANCE, POWER_MAX_ITERATIONS, seed) {
        let u = ndarray::Array1::from(top.vector.clone());
        let deflated = &sigma - &(top.value * outer(&u));
        let second = match power_iteration(&deflated, POWER_TOLERANCE, POWER_MAX_ITERATIONS, derive_seed(seed, 1)) {
            Some(p) => p.value,
            None => jacobi_eigen(&deflated).0[0],
        };
        return PrincipalDirection {
            direction: top.vector,
            eigenvalue: top.value,
            eigengap: top.value - second.max(0.0),
            used_fallback: false,
        };
    }
    let (values, vectors) = jacobi_eigen(&sigma);
    PrincipalDirection {
        direction: vectors.column(0).to_vec(),
        eigenvalue: values[0],
        eigengap: values[0] - values.get(1).copied().unwrap_or(0.0),
        used_fallback: true,
    }
}

fn outer(u: &ndarray::Array1<f64>) -> Array2<f64> {
    let n = u.len();
    Array2::from_shape_fn((n, n), |(i, j)| u[i] * u[j])
}

#[derive(Debug, Clone, PartialEq)]
pub struct UapPcaResult {
    pub delta: Vec<f64>,
    pub principal: PrincipalDirection,
    pub batch: GradientBatch,
    /// `F̂_N` at `+εu` and `−εu`.
    pub objective_plus: f64,
    pub objective_minus: f64,
}

/// `±ε u₁` with `u₁` the top eigenvector of `Σ̂`, the sign chosen by the larger `F̂_N`.
pub fn uap_pca(
    oracles: &[&dyn LossOracle],
    points: &[Vec<f64>],
    epsilon: f64,
    cfg: &SmoothingConfig,
) -> Result<UapPcaResult> {
    check_frames(oracles, points, 2)?;
    let batch = GradientBatch::estimate(oracles, points, cfg)?;
    let principal = principal_direction(&batch, derive_seed(cfg.seed, 0xE16));
    let plus: Vec<f64> = principal.direction.iter().map(|v| v * epsilon).collect();
    let plus = project_l2(&plus, epsilon);
    let minus: Vec<f64> = plus.iter().map(|v| -v).collect();
    let eval_cfg = cfg.with_seed(derive_seed(cfg.seed, 0x516));
    let objective_plus = empirical_objective(oracles, points, &plus, &eval_cfg)?;
    let objective_minus = empirical_objective(oracles, points, &minus, &eval_cfg)?;
    let delta = if objective_minus > objective_plus { minus } else { plus };
    Ok(UapPcaResult {
        delta,
        principal,
        batch,
        objective_plus,
        objective_minus,
    })
}

fn decoder_frames<'a>(
    decoder: &'a dyn Decoder,
    frames: &'a [ReceivedFrame],
) -> Result<(Vec<DecoderLoss<'a>>, Vec<Vec<f64>>, f64)> {
    let Some(first) = frames.first() else {
        return input_err("need at least one frame");
    };
    let sigma2 = first.snr.sigma2;
    let losses = frames
        .iter()
        .map(|f| DecoderLoss::new(decoder, &f.codeword, f.snr.sigma2))
        .collect();
    let points = frames.iter().map(|f| f.received.clone()).collect();
    Ok((losses, points, sigma2))
}

fn artifact(
    kind: AttackKind,
    decoder: &dyn Decoder,
    budget: &EnergyBudget,
    epsilon: f64,
    cfg: &SmoothingConfig,
    frames: &[ReceivedFrame],
    delta: Vec<f64>,
) -> AttackArtifact {
    let mut a = AttackArtifact::new(kind, decoder.code().id(), decoder.name(), budget.alpha, epsilon);
    a.seed = cfg.seed;
    a.frame_seed = frames.first().map_or(0, |f| f.seed);
    a.set_hyper("nu", cfg.nu);
    a.set_hyper("samples", cfg.samples);
    a.set_hyper("loss_clip", cfg.loss_clip);
    a.set_hyper("frames", frames.len());
    a.set_hyper("snr_db", frames.first().map_or(0.0, |f| f.snr.ebno_db));
    a.set_hyper("epsilon_rule", "alpha*sqrt(n*(1+sigma2))");
    a.delta = Some(delta);
    a
}

/// UAP-Grad against `decoder`, crafted on `frames`.
pub fn uap_grad_attack(
    decoder: &dyn Decoder,
    frames: &[ReceivedFrame],
    budget: &EnergyBudget,
    cfg: &SmoothingConfig,
    uap: &UapConfig,
) -> Result<AttackArtifact> {
    let (losses, points, sigma2) = decoder_frames(decoder, frames)?;
    let oracles: Vec<&dyn LossOracle> = losses.iter().map(|l| l as &dyn LossOracle).collect();
    let epsilon = budget.universal_epsilon(decoder.code().n(), sigma2);
    let delta = uap_grad(&oracles, &points, epsilon, cfg, uap)?;
    let mut a = artifact(AttackKind::UapGrad, decoder, budget, epsilon, cfg, frames, delta);
    a.set_hyper("estimator", resolve_estimator(oracles[0], cfg));
    a.set_hyper("batches", uap.batches);
    a.set_hyper("lr", uap.lr);
    a.set_hyper("uap_seed", uap.seed);
    Ok(a)
}

/// UAP-PCA against `decoder`, crafted on `frames`.
pub fn uap_pca_attack(
    decoder: &dyn Decoder,
    frames: &[ReceivedFrame],
    budget: &EnergyBudget,
    cfg: &SmoothingConfig,
) -> Result<(AttackArtifact, UapPcaResult)> {
    let (losses, points, sigma2) = decoder_frames(decoder, frames)?;
    let oracles: Vec<&dyn LossOracle> = losses.iter().map(|l| l as &dyn LossOracle).collect();
    let epsilon = budget.universal_epsilon(decoder.code().n(), sigma2);
    let result = uap_pca(&oracles, &points, epsilon, cfg)?;
    let mut a = artifact(
        AttackKind::UapPca,
        decoder,
        budget,
        epsilon,
        cfg,
        frames,
        result.delta.clone(),
    );
    a.set_hyper("estimator", resolve_estimator(oracles[0], cfg));
    a.set_hyper("eigenvalue", result.principal.eigenvalue);
    a.set_hyper("eigengap", result.principal.eigengap);
    a.set_hyper("gradient_norm_max", result.batch.max_norm);
    a.set_hyper("used_fallback", result.principal.used_fallback);
    Ok((a, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::{l2_norm, EstimatorKind, FnLoss};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rayleigh(sigma: &Array2<f64>, u: &[f64]) -> f64 {
        let u = ndarray::Array1::from(u.to_vec());
        u.dot(&sigma.dot(&u)) / u.dot(&u)
    }

    #[test]
    fn rank_one_batch_gives_the_axis() {
        let mut q = Array2::zeros((10, 6));
        for i in 0..10 {
            q[[i, 0]] = (i as f64 - 4.5) * 0.3;
        }
        let p = principal_direction(&GradientBatch::from_rows(q), 0);
        assert!((p.direction[0].abs() - 1.0).abs() < 1e-9);
        assert!(p.direction[1..].iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn random_batches_reach_the_top_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let q = Array2::from_shape_simple_fn((40, 5), || rng.random_range(-1.0..1.0));
            let batch = GradientBatch::from_rows(q);
            let sigma = batch.second_moment();
            let p = principal_direction(&batch, 3);
            let dm = nalgebra::DMatrix::from_fn(5, 5, |i, j| sigma[[i, j]]);
            let lambda1 = dm.symmetric_eigen().eigenvalues.max();
            assert!(rayleigh(&sigma, &p.direction) >= (1.0 - 1e-6) * lambda1);
            assert!(p.eigengap >= 0.0);
        }
    }

    #[test]
    fn dominant_cluster_wins() {
        // gradients along u with norm 3 and along v with norm 1
        let n = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut u = vec![0.0; n];
        u[1] = 0.6;
        u[4] = 0.8;
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        let mut q = Array2::zeros((200, n));
        for i in 0..200 {
            let (dir, scale) = if i % 2 == 0 { (&u, 3.0) } else { (&v, 1.0) };
            let s = if rng.random_bool(0.5) { scale } else { -scale };
            for j in 0..n {
                q[[i, j]] = s * dir[j] + rng.random_range(-0.01..0.01);
            }
        }
        let p = principal_direction(&GradientBatch::from_rows(q), 5);
        let cos: f64 = p.direction.iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!(cos.abs() > 0.99, "cos {cos}");
    }

    #[test]
    fn tied_spectrum_falls_back_to_dense_solver() {
        let mut q = Array2::zeros((2, 3));
        q[[0, 0]] = 1.0;
        q[[1, 1]] = 1.0;
        let p = principal_direction(&GradientBatch::from_rows(q), 0);
        assert!((p.eigenvalue - 0.5).abs() < 1e-12);
        assert!(p.eigengap.abs() < 1e-9);
    }

    fn linear_losses(w: &[f64], count: usize) -> Vec<FnLoss> {
        (0..count)
            .map(|_| {
                let w = w.to_vec();
                let w2 = w.clone();
                FnLoss::new(w.len(), move |u| {
                    10.0 + u.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
                })
                .with_gradient(move |_| w2.clone())
            })
            .collect()
    }

    #[test]
    fn uap_pca_picks_the_ascending_sign() {
        let w = [0.0, -2.0, 0.0, 1.0];
        let losses = linear_losses(&w, 5);
        let oracles: Vec<&dyn LossOracle> = losses.iter().map(|l| l as &dyn LossOracle).collect();
        let points = vec![vec![0.0; 4]; 5];
        let cfg = SmoothingConfig {
            estimator: EstimatorKind::BackpropMc,
            samples: 4,
            loss_clip: 1e6,
            ..Default::default()
        };
        let r = uap_pca(&oracles, &points, 0.5, &cfg).unwrap();
        let dot: f64 = r.delta.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!(dot > 0.0);
        assert!(r.objective_plus.max(r.objective_minus) > 10.0);
        assert!(l2_norm(&r.delta) <= 0.5 + crate::attacks::BUDGET_SLACK);
        assert!(uap_pca(&oracles[..1], &points[..1], 0.5, &cfg).is_err());
    }

    #[test]
    fn single_frame_uap_follows_the_gradient() {
        let w = [3.0, 4.0];
        let losses = linear_losses(&w, 1);
        let oracles: Vec<&dyn LossOracle> = vec![&losses[0]];
        let cfg = SmoothingConfig {
            estimator: EstimatorKind::BackpropMc,
            samples: 2,
            loss_clip: 1e6,
            ..Default::default()
        };
        let d = uap_grad(&oracles, &[vec![0.0, 0.0]], 1.0, &cfg, &UapConfig::default()).unwrap();
        // 50 steps of 0.05 reach the boundary along w/‖w‖
        assert!((d[0] - 0.6).abs() < 1e-12 && (d[1] - 0.8).abs() < 1e-12);
    }
}
