//! Gaussian-smoothed losses `g̃(u) = E[ℓ(u + V) ∧ C]`, `V ~ N(0, ν² I)`, and their gradients.

use crate::channel::stream_rng;
use crate::decoders::Decoder;
use crate::error::{input_err, Error, Result};
use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, StandardNormal};
use std::fmt;
use std::sync::OnceLock;

/// Rows evaluated per oracle call.
const CHUNK: usize = 4096;

/// Which Monte Carlo gradient estimator to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimatorKind {
    /// Average of analytic input gradients (white box).
    BackpropMc,
    /// Loss-only Stein estimator with antithetic pairs (black box).
    Stein,
    /// `BackpropMc` when the loss is differentiable, otherwise `Stein`.
    #[default]
    Auto,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::BackpropMc => "backprop_mc",
            Self::Stein => "stein",
            Self::Auto => "auto",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "backprop_mc" => Some(Self::BackpropMc),
            "stein" => Some(Self::Stein),
            "auto" => Some(Self::Auto),
            _ => None,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    /// Standard deviation of the smoothing noise.
    pub nu: f64,
    pub samples: usize,
    pub seed: u64,
    pub estimator: EstimatorKind,
    /// Losses are clipped to `[0, loss_clip]`.
    pub loss_clip: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            nu: 0.1,
            samples: 128,
            seed: 0,
            estimator: EstimatorKind::Auto,
            loss_clip: 10.0,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return input_err("nu must be positive");
        }
        if self.samples == 0 {
            return input_err("need at least one Monte Carlo sample");
        }
        if !(self.loss_clip > 0.0) {
            return input_err("loss clip must be positive");
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// A loss `u ↦ ℓ(u)` evaluated on batches of points (one per row).
pub trait LossOracle: Sync {
    fn dim(&self) -> usize;

    fn losses(&self, points: ArrayView2<'_, f64>) -> Vec<f64>;

    fn differentiable(&self) -> bool {
        false
    }

    /// Losses and `∇ℓ` per row; `None` when only values are available.
    fn losses_and_gradients(&self, _points: ArrayView2<'_, f64>) -> Option<(Vec<f64>, Array2<f64>)> {
        None
    }
}

/// `ℓ(u) = BCE(f(u), target)` for a decoder `f`.
pub struct DecoderLoss<'a> {
    pub decoder: &'a dyn Decoder,
    pub target: &'a [u8],
    pub sigma2: f64,
}

impl<'a> DecoderLoss<'a> {
    pub fn new(decoder: &'a dyn Decoder, target: &'a [u8], sigma2: f64) -> Self {
        Self {
            decoder,
            target,
            sigma2,
        }
    }
}

impl LossOracle for DecoderLoss<'_> {
    fn dim(&self) -> usize {
        self.decoder.code().n()
    }

    fn losses(&self, points: ArrayView2<'_, f64>) -> Vec<f64> {
        self.decoder.losses(points, self.target, self.sigma2)
    }

    fn differentiable(&self) -> bool {
        self.decoder.capabilities().differentiable
    }

    fn losses_and_gradients(&self, points: ArrayView2<'_, f64>) -> Option<(Vec<f64>, Array2<f64>)> {
        self.decoder.losses_and_gradients(points, self.target, self.sigma2).ok()
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Sync;

/// Loss given by plain closures; used for analytic checks and synthetic experiments.
pub struct FnLoss {
    dim: usize,
    value: Box<ValueFn>,
    gradient: Option<Box<GradFn>>,
}

impl FnLoss {
    pub fn new(dim: usize, value: impl Fn(&[f64]) -> f64 + Sync + 'static) -> Self {
        Self {
            dim,
            value: Box::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(mut self, gradient: impl Fn(&[f64]) -> Vec<f64> + Sync + 'static) -> Self {
        self.gradient = Some(Box::new(gradient));
        self
    }
}

impl LossOracle for FnLoss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn losses(&self, points: ArrayView2<'_, f64>) -> Vec<f64> {
        points.rows().into_iter().map(|r| (self.value)(&r.to_vec())).collect()
    }

    fn differentiable(&self) -> bool {
        self.gradient.is_some()
    }

    fn losses_and_gradients(&self, points: ArrayView2<'_, f64>) -> Option<(Vec<f64>, Array2<f64>)> {
        let g = self.gradient.as_ref()?;
        let mut grads = Array2::zeros(points.raw_dim());
        let mut losses = Vec::with_capacity(points.nrows());
        for (i, r) in points.rows().into_iter().enumerate() {
            let u = r.to_vec();
            losses.push((self.value)(&u));
            grads.row_mut(i).assign(&ndarray::Array1::from(g(&u)));
        }
        Some((losses, grads))
    }
}

/// Result of a Monte Carlo gradient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub gradient: Vec<f64>,
    pub samples_used: usize,
    pub estimator: EstimatorKind,
    /// Squared standard error of each coordinate.
    pub variance: Vec<f64>,
    /// Smoothed-loss estimate from the same samples.
    pub loss_mean: f64,
}

impl GradientEstimate {
    pub fn norm(&self) -> f64 {
        l2_norm(&self.gradient)
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn clip(loss: f64, c: f64) -> f64 {
    if loss.is_nan() {
        c
    } else {
        loss.clamp(0.0, c)
    }
}

fn check_point(oracle: &dyn LossOracle, point: &[f64], cfg: &SmoothingConfig) -> Result<()> {
    cfg.validate()?;
    if point.len() != oracle.dim() {
        return input_err(format!(
            "point has length {}, loss expects {}",
            point.len(),
            oracle.dim()
        ));
    }
    Ok(())
}

/// `rows × n` standard-normal draws.
fn normal_block(rng: &mut impl rand::Rng, rows: usize, n: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, n), || StandardNormal.sample(rng))
}

/// `y + δ` elementwise.
pub fn offset(y: &[f64], delta: &[f64]) -> Vec<f64> {
    y.iter().zip(delta).map(|(a, b)| a + b).collect()
}

/// Monte Carlo estimate of `g̃(point)` with `cfg.samples` draws.
pub fn smoothed_loss(oracle: &dyn LossOracle, point: &[f64], cfg: &SmoothingConfig) -> Result<f64> {
    check_point(oracle, point, cfg)?;
    let n = point.len();
    let mut rng = stream_rng(cfg.seed, 0);
    let mut total = 0.0;
    let mut done = 0;
    while done < cfg.samples {
        let rows = CHUNK.min(cfg.samples - done);
        let mut pts = normal_block(&mut rng, rows, n);
        pts.mapv_inplace(|z| cfg.nu * z);
        for mut r in pts.rows_mut() {
            r.iter_mut().zip(point).for_each(|(v, p)| *v += p);
        }
        total += oracle
            .losses(pts.view())
            .into_iter()
            .map(|l| clip(l, cfg.loss_clip))
            .sum::<f64>();
        done += rows;
    }
    Ok(total / cfg.samples as f64)
}

/// Running per-coordinate mean and variance (Welford).
struct Moments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    fn push(&mut self, x: impl Iterator<Item = f64>) {
        self.count += 1;
        let k = self.count as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / k;
            *s += d * (v - *m);
        }
    }

    /// Squared standard error of each mean.
    fn standard_error2(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let c = self.count as f64;
        self.m2.iter().map(|s| s / (c - 1.0) / c).collect()
    }
}

/// `(1/M) Σ ∇ℓ(point + V_m)`, with zero gradient wherever the loss is clipped.
pub fn grad_backprop_mc(oracle: &dyn LossOracle, point: &[f64], cfg: &SmoothingConfig) -> Result<GradientEstimate> {
    check_point(oracle, point, cfg)?;
    if !oracle.differentiable() {
        return Err(Error::Capability("loss exposes no input gradients".into()));
    }
    let n = point.len();
    let mut rng = stream_rng(cfg.seed, 0);
    let mut mom = Moments::new(n);
    let mut loss_total = 0.0;
    let mut done = 0;
    while done < cfg.samples {
        let rows = CHUNK.min(cfg.samples - done);
        let mut pts = normal_block(&mut rng, rows, n);
        pts.mapv_inplace(|z| cfg.nu * z);
        for mut r in pts.rows_mut() {
            r.iter_mut().zip(point).for_each(|(v, p)| *v += p);
        }
        let (losses, grads) = oracle
            .losses_and_gradients(pts.view())
            .ok_or_else(|| Error::Capability("loss exposes no input gradients".into()))?;
        for (l, g) in losses.iter().zip(grads.rows()) {
            loss_total += clip(*l, cfg.loss_clip);
            let active = *l <= cfg.loss_clip && l.is_finite();
            mom.push(g.iter().map(|&v| if active { v } else { 0.0 }));
        }
        done += rows;
    }
    Ok(GradientEstimate {
        variance: mom.standard_error2(),
        gradient: mom.mean,
        samples_used: cfg.samples,
        estimator: EstimatorKind::BackpropMc,
        loss_mean: loss_total / cfg.samples as f64,
    })
}

/// Stein estimator `(1/(M ν²)) Σ ℓ(point + V_m) V_m` over antithetic pairs `(V, −V)`.
///
/// An odd `cfg.samples` is rounded up so every draw has its mirror.
pub fn grad_stein(oracle: &dyn LossOracle, point: &[f64], cfg: &SmoothingConfig) -> Result<GradientEstimate> {
    check_point(oracle, point, cfg)?;
    let n = point.len();
    let pairs = cfg.samples.div_ceil(2);
    let nu = cfg.nu;
    let mut rng = stream_rng(cfg.seed, 0);
    let mut mom = Moments::new(n);
    let mut loss_total = 0.0;
    let mut done = 0;
    while done < pairs {
        let rows = (CHUNK / 2).min(pairs - done);
        let z = normal_block(&mut rng, rows, n);
        let mut pts = Array2::zeros((2 * rows, n));
        for (i, zr) in z.rows().into_iter().enumerate() {
            for j in 0..n {
                pts[[2 * i, j]] = point[j] + nu * zr[j];
                pts[[2 * i + 1, j]] = point[j] - nu * zr[j];
            }
        }
        let losses = oracle.losses(pts.view());
        for (i, zr) in z.rows().into_iter().enumerate() {
            let lp = clip(losses[2 * i], cfg.loss_clip);
            let lm = clip(losses[2 * i + 1], cfg.loss_clip);
            loss_total += lp + lm;
            // V = ν z, so ℓ V / ν² = ℓ z / ν
            let w = (lp - lm) / (2.0 * nu);
            mom.push(zr.iter().map(|&zj| w * zj));
        }
        done += rows;
    }
    Ok(GradientEstimate {
        variance: mom.standard_error2(),
        gradient: mom.mean,
        samples_used: 2 * pairs,
        estimator: EstimatorKind::Stein,
        loss_mean: loss_total / (2 * pairs) as f64,
    })
}

/// Estimator that `cfg.estimator` selects for `oracle`.
pub fn resolve_estimator(oracle: &dyn LossOracle, cfg: &SmoothingConfig) -> EstimatorKind {
    match cfg.estimator {
        EstimatorKind::Auto if oracle.differentiable() => EstimatorKind::BackpropMc,
        EstimatorKind::Auto => EstimatorKind::Stein,
        k => k,
    }
}

/// Gradient with the estimator chosen by `cfg.estimator`.
pub fn estimate_gradient(oracle: &dyn LossOracle, point: &[f64], cfg: &SmoothingConfig) -> Result<GradientEstimate> {
    match resolve_estimator(oracle, cfg) {
        EstimatorKind::BackpropMc => grad_backprop_mc(oracle, point, cfg),
        _ => grad_stein(oracle, point, cfg),
    }
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

const MAX_DEPTH: u32 = 50;
const MIN_DEPTH: u32 = 8;

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    // force a few subdivisions so narrow features are not skipped by the first estimate
    if depth == 0 || (depth < MAX_DEPTH - MIN_DEPTH && diff.abs() <= 15.0 * tol) {
        return left + right + diff / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

/// `E|Z² − 1|` for `Z ~ N(0, 1)`, by quadrature (computed once).
pub fn abs_chi_moment() -> f64 {
    static VALUE: OnceLock<f64> = OnceLock::new();
    *VALUE.get_or_init(|| {
        let f = |z: f64| (z * z - 1.0).abs() * std_normal_pdf(z);
        // split at the kink z = 1; the tail beyond 40 is below 1e-300
        2.0 * (integrate(&f, 0.0, 1.0, 1e-15) + integrate(&f, 1.0, 40.0, 1e-15))
    })
}

/// Smoothness constant `β ≤ (C/ν²) E|Z² − 1|` of the smoothed loss.
pub fn beta_bound(cfg: &SmoothingConfig) -> f64 {
    cfg.loss_clip / (cfg.nu * cfg.nu) * abs_chi_moment()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(nu: f64, samples: usize, seed: u64) -> SmoothingConfig {
        SmoothingConfig {
            nu,
            samples,
            seed,
            estimator: EstimatorKind::Stein,
            loss_clip: 10.0,
        }
    }

    fn step_loss() -> FnLoss {
        FnLoss::new(1, |u| if u[0] < 0.0 { 1.0 } else { 0.0 })
    }

    #[test]
    fn abs_chi_moment_matches_closed_form() {
        // ∫|z²−1|φ = 4φ(1)
        let exact = 4.0 * std_normal_pdf(1.0);
        assert!((abs_chi_moment() - exact).abs() < 1e-12, "{}", abs_chi_moment());
        assert!((abs_chi_moment() - 0.968).abs() < 5e-4);
    }

    #[test]
    fn beta_bound_examples() {
        let c1 = SmoothingConfig {
            nu: 1.0,
            loss_clip: 1.0,
            ..Default::default()
        };
        assert!((beta_bound(&c1) - 0.968).abs() < 1e-3);
        let c2 = SmoothingConfig { nu: 0.5, ..c1 };
        assert!((beta_bound(&c2) - 3.872).abs() < 2e-3);
        assert!(beta_bound(&c2) < 1.0 / 0.25);
    }

    #[test]
    fn degenerate_smoothing_recovers_the_clipped_loss() {
        let loss = FnLoss::new(3, |u| u.iter().map(|x| x * x).sum::<f64>());
        let u = [0.5, -1.0, 2.0];
        let v = smoothed_loss(&loss, &u, &cfg(1e-12, 64, 0)).unwrap();
        assert!((v - 5.25).abs() < 1e-6);
        let big = [3.0, 3.0, 3.0];
        assert!((smoothed_loss(&loss, &big, &cfg(1e-12, 8, 0)).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn constant_loss_is_exact_and_has_zero_stein_gradient() {
        let loss = FnLoss::new(4, |_| 2.5);
        for m in [1, 2, 7, 100] {
            assert_eq!(smoothed_loss(&loss, &[0.0; 4], &cfg(0.3, m, 1)).unwrap(), 2.5);
            let g = grad_stein(&loss, &[0.0; 4], &cfg(0.3, m, 1)).unwrap();
            assert!(g.gradient.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn step_loss_value_and_gradient() {
        let m = 100_000;
        let c = cfg(0.5, m, 3);
        let v = smoothed_loss(&step_loss(), &[0.0], &c).unwrap();
        assert!((v - 0.5).abs() < 3.0 / (m as f64).sqrt());
        let g = grad_stein(&step_loss(), &[0.0], &c).unwrap();
        let want = -1.0 / (0.5 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((g.gradient[0] - want).abs() < 0.05 * want.abs(), "{}", g.gradient[0]);
    }

    #[test]
    fn stein_recovers_quadratic_gradient() {
        let loss = FnLoss::new(8, |u| u.iter().map(|x| x * x).sum::<f64>());
        let mut u = [0.0; 8];
        u[0] = 1.0;
        let c = SmoothingConfig {
            loss_clip: 1e6,
            ..cfg(0.5, 100_000, 4)
        };
        let g = grad_stein(&loss, &u, &c).unwrap();
        for j in 0..8 {
            let want = 2.0 * u[j];
            assert!(
                (g.gradient[j] - want).abs() < 0.05 * 2.0,
                "coord {j}: {}",
                g.gradient[j]
            );
        }
    }

    #[test]
    fn backprop_on_linear_loss_is_exact() {
        let w = vec![0.3, -1.2, 2.0];
        let w2 = w.clone();
        let w3 = w.clone();
        let loss = FnLoss::new(3, move |u| 5.0 + u.iter().zip(&w2).map(|(a, b)| a * b).sum::<f64>())
            .with_gradient(move |_| w3.clone());
        let g = grad_backprop_mc(&loss, &[0.1, 0.2, 0.3], &cfg(0.2, 50, 0)).unwrap();
        for j in 0..3 {
            assert!((g.gradient[j] - w[j]).abs() < 1e-12);
        }
        assert_eq!(g.samples_used, 50);
        assert_eq!(g.estimator, EstimatorKind::BackpropMc);
    }

    #[test]
    fn backprop_requires_gradients() {
        assert!(matches!(
            grad_backprop_mc(&step_loss(), &[0.0], &cfg(0.1, 4, 0)),
            Err(Error::Capability(_))
        ));
        assert_eq!(
            resolve_estimator(&step_loss(), &SmoothingConfig::default()),
            EstimatorKind::Stein
        );
    }

    #[test]
    fn estimates_are_deterministic_given_seed() {
        let loss = FnLoss::new(5, |u| u.iter().map(|x| x.sin()).sum::<f64>().abs());
        let p = [0.1, 0.4, -0.3, 0.9, 0.0];
        let a = grad_stein(&loss, &p, &cfg(0.2, 300, 9)).unwrap();
        let b = grad_stein(&loss, &p, &cfg(0.2, 300, 9)).unwrap();
        assert_eq!(a, b);
        let c = grad_stein(&loss, &p, &cfg(0.2, 300, 10)).unwrap();
        assert_ne!(a.gradient, c.gradient);
    }

    #[test]
    fn antithetic_pairs_do_not_increase_variance() {
        // plain estimator: each draw gives ℓ(u+νz) z/ν; compare its variance per mean
        let losses: Vec<(FnLoss, Vec<f64>)> = vec![
            (
                FnLoss::new(4, |u| u.iter().map(|x| x * x).sum::<f64>()),
                vec![1.0, 0.0, -0.5, 0.2],
            ),
            (
                FnLoss::new(4, |u| if u[0] + u[1] < 0.0 { 1.0 } else { 0.0 }),
                vec![0.05, 0.0, 0.0, 0.0],
            ),
            (FnLoss::new(4, |u| (u[2] - 1.0).abs()), vec![0.0, 0.0, 0.8, 0.0]),
        ];
        let (nu, m) = (0.5, 20_000);
        for (loss, u) in &losses {
            let c = SmoothingConfig {
                loss_clip: 1e6,
                ..cfg(nu, m, 5)
            };
            let anti = grad_stein(loss, u, &c).unwrap();
            let mut rng = stream_rng(77, 0);
            let mut mom = Moments::new(4);
            for _ in 0..m {
                let z: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
                let pt: Vec<f64> = u.iter().zip(&z).map(|(a, b)| a + nu * b).collect();
                let l = loss.losses(ndarray::ArrayView2::from_shape((1, 4), &pt).unwrap())[0];
                mom.push(z.iter().map(|zj| l * zj / nu));
            }
            let plain = mom.standard_error2();
            for j in 0..4 {
                assert!(
                    anti.variance[j] <= plain[j] * 1.1,
                    "coord {j}: {} vs {}",
                    anti.variance[j],
                    plain[j]
                );
            }
        }
    }

    proptest! {
        #[test]
        fn smoothed_loss_stays_in_clip_range(shift in -5.0f64..5.0, scale in 0.0f64..100.0, seed in 0u64..1000) {
            let loss = FnLoss::new(2, move |u| scale * (u[0] - shift).powi(2) - 1.0);
            let c = SmoothingConfig { loss_clip: 3.0, ..cfg(0.7, 64, seed) };
            let v = smoothed_loss(&loss, &[0.2, -0.1], &c).unwrap();
            prop_assert!((0.0..=3.0).contains(&v));
        }
    }
}
