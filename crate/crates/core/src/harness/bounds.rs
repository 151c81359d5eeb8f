//! Finite-sample concentration bounds for the universal objective and UAP-PCA, and a
//! Monte Carlo check of their coverage on distributions with known moments.

use crate::attacks::{jacobi_eigen, principal_direction, GradientBatch};
use crate::channel::{derive_seed, stream_rng};
use crate::error::{input_err, Result};
use ndarray::Array2;
use rand::Rng;

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return input_err(format!("eta must lie in (0, 1), got {eta}"));
    }
    Ok(())
}

/// `|F̂_N(δ) − F(δ)| ≤ C √(log(4/η) / (2N))`.
pub fn hoeffding_objective_bound(c: f64, eta: f64, samples: usize) -> Result<f64> {
    check_eta(eta)?;
    if samples == 0 {
        return input_err("need N ≥ 1");
    }
    Ok(c * ((4.0 / eta).ln() / (2.0 * samples as f64)).sqrt())
}

/// `‖Σ̂ − Σ‖_op ≤ 4√2 L² √(log(4n/η) / N)`.
pub fn matrix_bound(l: f64, eta: f64, samples: usize, n: usize) -> Result<f64> {
    check_eta(eta)?;
    if samples == 0 || n == 0 {
        return input_err("need N ≥ 1 and n ≥ 1");
    }
    Ok(4.0 * 2f64.sqrt() * l * l * ((4.0 * n as f64 / eta).ln() / samples as f64).sqrt())
}

/// `sin∠(û₁, u₁) ≤ matrix_bound / Δ`.
pub fn davis_kahan_bound(l: f64, eta: f64, samples: usize, n: usize, gap: f64) -> Result<f64> {
    if !(gap > 0.0) {
        return input_err(format!("eigengap must be positive, got {gap}"));
    }
    Ok(matrix_bound(l, eta, samples, n)? / gap)
}

/// All three bounds for one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationReport {
    pub c: f64,
    pub l: f64,
    pub gap: f64,
    pub samples: usize,
    pub n: usize,
    pub eta: f64,
    pub bound_objective: f64,
    pub bound_sigma_op: f64,
    pub bound_sin_angle: f64,
}

impl ConcentrationReport {
    pub fn new(c: f64, l: f64, gap: f64, samples: usize, n: usize, eta: f64) -> Result<Self> {
        Ok(Self {
            c,
            l,
            gap,
            samples,
            n,
            eta,
            bound_objective: hoeffding_objective_bound(c, eta, samples)?,
            bound_sigma_op: matrix_bound(l, eta, samples, n)?,
            bound_sin_angle: davis_kahan_bound(l, eta, samples, n, gap)?,
        })
    }
}

/// Synthetic population with closed-form `F`, `Σ_q` and `u₁`.
///
/// Each draw picks axis `j` with probability `axis_probs[j]` and a uniform sign, giving
/// `q = ±L e_j`, so `Σ_q = L² diag(axis_probs)`. The loss is `C · Bernoulli(loss_prob)`,
/// so `F = C · loss_prob`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub axis_probs: Vec<f64>,
    pub grad_cap: f64,
    pub loss_bound: f64,
    pub loss_prob: f64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.axis_probs.iter().sum();
        if self.axis_probs.is_empty() || self.axis_probs.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return input_err("axis probabilities must be a distribution");
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return input_err("loss probability must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.axis_probs.len()
    }

    /// Sorted `(λ₁, λ₂)` of `Σ_q` and the index of `u₁`.
    pub fn top_eigen(&self) -> (f64, f64, usize) {
        let l2 = self.grad_cap * self.grad_cap;
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.sort_by(|&a, &b| self.axis_probs[b].total_cmp(&self.axis_probs[a]).then(a.cmp(&b)));
        let second = idx.get(1).map_or(0.0, |&i| l2 * self.axis_probs[i]);
        (l2 * self.axis_probs[idx[0]], second, idx[0])
    }

    pub fn gap(&self) -> f64 {
        let (a, b, _) = self.top_eigen();
        a - b
    }
}

/// Fraction of repetitions in which each bound failed.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub report: ConcentrationReport,
    pub repetitions: usize,
    /// Violations of the objective, operator-norm and angle bounds.
    pub violations: [usize; 3],
    /// Largest observed deviations, for diagnostics.
    pub worst: [f64; 3],
}

impl CoverageReport {
    pub fn rates(&self) -> [f64; 3] {
        self.violations.map(|v| v as f64 / self.repetitions as f64)
    }

    /// Every bound failed in at most an `η` fraction of repetitions.
    pub fn covered(&self) -> bool {
        self.rates().iter().all(|&r| r <= self.report.eta)
    }
}

/// Draws `repetitions` independent samples of size `samples` and checks each bound.
pub fn validate_concentration(
    spec: &SyntheticSpec,
    samples: usize,
    eta: f64,
    repetitions: usize,
    seed: u64,
) -> Result<CoverageReport> {
    spec.validate()?;
    let n = spec.n();
    let (lambda1, _, top) = spec.top_eigen();
    let report = ConcentrationReport::new(spec.loss_bound, spec.grad_cap, spec.gap(), samples, n, eta)?;
    let sigma_diag: Vec<f64> = spec
        .axis_probs
        .iter()
        .map(|p| p * spec.grad_cap * spec.grad_cap)
        .collect();
    let f_true = spec.loss_bound * spec.loss_prob;
    let cumulative: Vec<f64> = spec
        .axis_probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let mut violations = [0usize; 3];
    let mut worst = [0.0f64; 3];
    for rep in 0..repetitions {
        let mut rng = stream_rng(derive_seed(seed, rep as u64), 0);
        let mut q = Array2::zeros((samples, n));
        let mut losses = 0.0;
        for i in 0..samples {
            let r: f64 = rng.random();
            let j = cumulative.iter().position(|&c| r < c).unwrap_or(n - 1);
            q[[i, j]] = if rng.random_bool(0.5) {
                spec.grad_cap
            } else {
                -spec.grad_cap
            };
            if rng.random_bool(spec.loss_prob) {
                losses += spec.loss_bound;
            }
        }
        let dev_f = (losses / samples as f64 - f_true).abs();
        let batch = GradientBatch::from_rows(q);
        let mut diff = batch.second_moment();
        for j in 0..n {
            diff[[j, j]] -= sigma_diag[j];
        }
        let (vals, _) = jacobi_eigen(&diff);
        let op = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let u_hat = principal_direction(&batch, derive_seed(seed, rep as u64 ^ 0xA5A5)).direction;
        let cos = u_hat[top].abs().min(1.0);
        let sin = (1.0 - cos * cos).max(0.0).sqrt();
        let devs = [dev_f, op, sin];
        let bounds = [report.bound_objective, report.bound_sigma_op, report.bound_sin_angle];
        for k in 0..3 {
            worst[k] = worst[k].max(devs[k]);
            if devs[k] > bounds[k] {
                violations[k] += 1;
            }
        }
        debug_assert!(lambda1 > 0.0);
    }
    Ok(CoverageReport {
        report,
        repetitions,
        violations,
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_values() {
        assert!((hoeffding_objective_bound(1.0, 0.04, 5000).unwrap() - 0.02146).abs() < 1e-5);
        assert!((matrix_bound(1.0, 0.04, 10_000, 10).unwrap() - 0.1487).abs() < 1e-4);
        assert_eq!(hoeffding_objective_bound(0.0, 0.3, 10).unwrap(), 0.0);
        let a = hoeffding_objective_bound(2.0, 0.1, 100).unwrap();
        let b = hoeffding_objective_bound(2.0, 0.1, 400).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
        let m1 = matrix_bound(1.0, 0.1, 100, 8).unwrap();
        assert!((matrix_bound(3.0, 0.1, 100, 8).unwrap() / m1 - 9.0).abs() < 1e-12);
        let m2 = matrix_bound(1.0, 0.1, 100, 16).unwrap();
        let ratio = ((64.0f64 / 0.1).ln() / (32.0f64 / 0.1).ln()).sqrt();
        assert!((m2 / m1 - ratio).abs() < 1e-12);
    }

    #[test]
    fn davis_kahan_scaling_and_errors() {
        let m = matrix_bound(1.0, 0.05, 1000, 4).unwrap();
        assert_eq!(davis_kahan_bound(1.0, 0.05, 1000, 4, 1.0).unwrap(), m);
        assert!(davis_kahan_bound(1.0, 0.05, 1000, 4, 1e-9).unwrap() > 1e6 * m);
        assert!(davis_kahan_bound(1.0, 0.05, 1000, 4, 0.0).is_err());
        assert!(hoeffding_objective_bound(1.0, 1.0, 10).is_err());
    }

    #[test]
    fn coverage_on_known_populations() {
        let specs = [
            SyntheticSpec {
                axis_probs: vec![0.6, 0.25, 0.15],
                grad_cap: 1.0,
                loss_bound: 1.0,
                loss_prob: 0.3,
            },
            // λ₁ = 2, λ₂ = 1
            SyntheticSpec {
                axis_probs: vec![0.5, 0.25, 0.25],
                grad_cap: 2.0,
                loss_bound: 1.0,
                loss_prob: 0.5,
            },
        ];
        for spec in &specs {
            let r = validate_concentration(spec, 200, 0.1, 100, 3).unwrap();
            assert!(r.covered(), "{r:?}");
        }
        let tiny = validate_concentration(&specs[0], 3, 0.5, 200, 4).unwrap();
        assert!(tiny.covered(), "{tiny:?}");
    }
}
