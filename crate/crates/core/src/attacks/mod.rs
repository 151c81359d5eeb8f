//! Perturbations under an L2 energy budget: random, FGM, PGD, UAP-Grad and UAP-PCA.

mod artifact;
mod eigen;
mod sample;
mod universal;

pub use artifact::AttackArtifact;
pub use eigen::{jacobi_eigen, power_iteration, EigenPair};
pub use sample::{fgm, fgm_attack, pgd, pgd_attack, random_baseline, random_in_ball, Perturbation, PgdConfig};
pub use universal::{
    empirical_objective, principal_direction, uap_grad, uap_grad_attack, uap_pca, uap_pca_attack, GradientBatch,
    PrincipalDirection, UapConfig, UapPcaResult,
};

use crate::error::{input_err, Result};
use crate::smoothing::l2_norm;
use std::fmt;

/// Slack allowed on `‖δ‖ ≤ ε` for floating-point rounding.
pub const BUDGET_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackKind {
    Random,
    Fgm,
    Pgd,
    UapGrad,
    UapPca,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] = [Self::Random, Self::Fgm, Self::Pgd, Self::UapGrad, Self::UapPca];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Fgm => "fgm",
            Self::Pgd => "pgd",
            Self::UapGrad => "uap_grad",
            Self::UapPca => "uap_pca",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// One shared perturbation for every frame.
    pub fn is_universal(self) -> bool {
        matches!(self, Self::UapGrad | Self::UapPca)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Relative energy bound `‖δ‖ ≤ α‖y‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBudget {
    pub alpha: f64,
}

impl EnergyBudget {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return input_err(format!("alpha must be a finite non-negative number, got {alpha}"));
        }
        Ok(Self { alpha })
    }

    /// `ε = α‖y‖` for one frame.
    pub fn sample_epsilon(&self, y: &[f64]) -> f64 {
        self.alpha * l2_norm(y)
    }

    /// `ε = α √(n (1 + σ²))`, the sample-wise radius at the expected received norm.
    pub fn universal_epsilon(&self, n: usize, sigma2: f64) -> f64 {
        self.alpha * (n as f64 * (1.0 + sigma2)).sqrt()
    }
}

/// Euclidean projection onto `{δ : ‖δ‖ ≤ ε}`.
pub fn project_l2(delta: &[f64], epsilon: f64) -> Vec<f64> {
    assert!(epsilon >= 0.0, "epsilon must be non-negative");
    let norm = l2_norm(delta);
    if norm <= epsilon {
        delta.to_vec()
    } else {
        let s = epsilon / norm;
        delta.iter().map(|d| d * s).collect()
    }
}

/// `ε · v / ‖v‖`, or `None` when `‖v‖ < 1e-12`.
pub(crate) fn scale_to(v: &[f64], epsilon: f64) -> Option<Vec<f64>> {
    let norm = l2_norm(v);
    if norm < 1e-12 {
        return None;
    }
    // re-project to absorb rounding in the division
    Some(project_l2(
        &v.iter().map(|x| x * epsilon / norm).collect::<Vec<_>>(),
        epsilon,
    ))
}
