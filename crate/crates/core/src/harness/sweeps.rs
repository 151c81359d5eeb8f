//! Attack preparation, transferability matrices and α ablations.

use super::simulate::{simulate, FerConfig, Perturber};
use super::stats::{FerStats, PairedCounts};
use crate::attacks::{uap_grad_attack, uap_pca_attack, AttackArtifact, AttackKind, EnergyBudget, PgdConfig, UapConfig};
use crate::channel::{derive_seed, transmit, MessageMode, ReceivedFrame, SnrContext};
use crate::decoders::Decoder;
use crate::error::{input_err, Result};
use crate::smoothing::SmoothingConfig;
use std::collections::BTreeMap;

const CRAFT_TAG: u64 = 0xC4AF;
const RANDOM_TAG: u64 = 0x4A4D;

/// `"none"`/`"clean"` → `None`, otherwise an attack kind.
pub fn parse_attack(s: &str) -> Result<Option<AttackKind>> {
    match s {
        "none" | "clean" => Ok(None),
        other => AttackKind::parse(other)
            .map(Some)
            .ok_or_else(|| crate::Error::Input(format!("unknown attack {other:?}"))),
    }
}

pub fn attack_label(attack: Option<AttackKind>) -> &'static str {
    attack.map_or("none", AttackKind::as_str)
}

/// Everything attacks need besides the decoder and the budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSettings {
    pub smoothing: SmoothingConfig,
    pub pgd: PgdConfig,
    pub uap: UapConfig,
    /// Frames the universal attacks are crafted on; disjoint from evaluation frames.
    pub craft_frames: usize,
    pub seed: u64,
}

impl Default for AttackSettings {
    fn default() -> Self {
        Self {
            smoothing: SmoothingConfig::default(),
            pgd: PgdConfig::default(),
            uap: UapConfig::default(),
            craft_frames: 256,
            seed: 0,
        }
    }
}

impl AttackSettings {
    pub fn craft_seed(&self) -> u64 {
        derive_seed(self.seed, CRAFT_TAG)
    }

    /// Crafting frames at one SNR.
    pub fn crafting_frames(&self, source: &dyn Decoder, snr_db: f64) -> Result<Vec<ReceivedFrame>> {
        let snr = SnrContext::for_code(source.code(), snr_db)?;
        let seed = self.craft_seed();
        Ok((0..self.craft_frames)
            .map(|i| transmit(source.code(), &snr, seed, i as u64, MessageMode::Uniform))
            .collect())
    }
}

/// A ready-to-apply attack and the artifact describing it.
pub struct PreparedAttack<'a> {
    pub perturber: Perturber<'a>,
    pub artifact: Option<AttackArtifact>,
}

/// Crafts (universal) or configures (per-frame) `attack` against `source` at one SNR.
pub fn prepare_attack<'a>(
    attack: Option<AttackKind>,
    source: &'a dyn Decoder,
    snr_db: f64,
    alpha: f64,
    settings: &AttackSettings,
) -> Result<PreparedAttack<'a>> {
    let Some(kind) = attack else {
        return Ok(PreparedAttack {
            perturber: Perturber::None,
            artifact: None,
        });
    };
    let budget = EnergyBudget::new(alpha)?;
    let code_id = source.code().id().to_string();
    let smoothing = settings
        .smoothing
        .with_seed(derive_seed(settings.seed, settings.smoothing.seed));
    let mut artifact = match kind {
        AttackKind::UapGrad | AttackKind::UapPca => {
            let frames = settings.crafting_frames(source, snr_db)?;
            if frames.len() < 2 {
                return input_err("universal attacks need at least two crafting frames");
            }
            let uap = UapConfig {
                seed: derive_seed(settings.seed, settings.uap.seed),
                ..settings.uap
            };
            let mut a = if kind == AttackKind::UapGrad {
                uap_grad_attack(source, &frames, &budget, &smoothing, &uap)?
            } else {
                uap_pca_attack(source, &frames, &budget, &smoothing)?.0
            };
            a.frame_seed = settings.craft_seed();
            a
        }
        _ => {
            let mut a = AttackArtifact::new(kind, &code_id, source.name(), alpha, 0.0);
            a.set_hyper("epsilon_rule", "alpha*norm(y)");
            a.set_hyper("snr_db", snr_db);
            if kind != AttackKind::Random {
                a.set_hyper("nu", smoothing.nu);
                a.set_hyper("samples", smoothing.samples);
                a.set_hyper("loss_clip", smoothing.loss_clip);
                a.set_hyper("estimator", smoothing.estimator.as_str());
            }
            if kind == AttackKind::Pgd {
                a.set_hyper("steps", settings.pgd.steps);
                a.set_hyper("step_factor", settings.pgd.step_factor);
            }
            a
        }
    };
    artifact.seed = settings.seed;
    let perturber = match kind {
        AttackKind::Random => Perturber::Random {
            budget,
            seed: derive_seed(settings.seed, RANDOM_TAG),
        },
        AttackKind::Fgm => Perturber::Fgm {
            source,
            budget,
            smoothing,
        },
        AttackKind::Pgd => Perturber::Pgd {
            source,
            budget,
            smoothing,
            pgd: PgdConfig {
                seed: derive_seed(settings.seed, settings.pgd.seed),
                ..settings.pgd
            },
        },
        AttackKind::UapGrad | AttackKind::UapPca => {
            Perturber::Universal(artifact.delta.clone().expect("universal artifacts carry delta"))
        }
    };
    Ok(PreparedAttack {
        perturber,
        artifact: Some(artifact),
    })
}

/// One cell of a transferability table.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferCell {
    pub source: String,
    pub target: String,
    pub attack: Option<AttackKind>,
    pub snr_db: f64,
    pub alpha: f64,
    pub stats: FerStats,
    /// Per-frame errors, aligned across every cell with the same SNR.
    pub errors: Vec<bool>,
}

/// Attacks crafted on each source, evaluated on every target on identical frames.
///
/// `fer.snr_db` is overridden by each grid point; `fer.target_errors` is ignored so all
/// cells at one SNR share the same frame set.
pub fn transferability_matrix(
    sources: &[&dyn Decoder],
    targets: &[&dyn Decoder],
    attacks: &[Option<AttackKind>],
    snr_grid: &[f64],
    alpha: f64,
    settings: &AttackSettings,
    fer: &FerConfig,
) -> Result<Vec<TransferCell>> {
    if sources.is_empty() || targets.is_empty() || attacks.is_empty() || snr_grid.is_empty() {
        return input_err("transferability needs nonempty sources, targets, attacks and SNR grid");
    }
    let mut cells = Vec::new();
    for &snr_db in snr_grid {
        let cfg = FerConfig {
            snr_db,
            target_errors: None,
            ..*fer
        };
        for &source in sources {
            for &attack in attacks {
                let prepared = prepare_attack(attack, source, snr_db, alpha, settings)?;
                let run = simulate(targets, &prepared.perturber, &cfg)?;
                for (t, target) in targets.iter().enumerate() {
                    cells.push(TransferCell {
                        source: source.name().to_string(),
                        target: target.name().to_string(),
                        attack,
                        snr_db,
                        alpha,
                        stats: run.stats[t],
                        errors: run.errors[t].clone(),
                    });
                }
            }
        }
    }
    Ok(cells)
}

/// FER at one `(attack, snr, α)` point of an ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub attack: Option<AttackKind>,
    pub snr_db: f64,
    pub alpha: f64,
    pub stats: FerStats,
    pub errors: Vec<bool>,
}

/// Monotonicity of FER in α for one `(attack, snr)` series.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityDiagnostic {
    pub attack: Option<AttackKind>,
    pub snr_db: f64,
    /// Point estimates never decrease with α.
    pub non_decreasing: bool,
    /// Adjacent `(α_lo, α_hi)` pairs whose FER drops with paired significance p < 0.01.
    pub significant_drops: Vec<(f64, f64, f64)>,
    /// `FER(attack) − FER(random)` per α, when the random baseline was swept too.
    pub gap_over_random: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    /// Sorted by attack, SNR, then α.
    pub rows: Vec<AblationRow>,
    pub diagnostics: Vec<MonotonicityDiagnostic>,
}

/// FER of `decoder` under each attack crafted on itself, over an SNR × α grid.
pub fn ablation_alpha_sweep(
    decoder: &dyn Decoder,
    attacks: &[AttackKind],
    snr_grid: &[f64],
    alpha_grid: &[f64],
    settings: &AttackSettings,
    fer: &FerConfig,
) -> Result<AblationTable> {
    if attacks.is_empty() || snr_grid.is_empty() || alpha_grid.is_empty() {
        return input_err("ablation needs nonempty attack, SNR and alpha grids");
    }
    let mut alphas = alpha_grid.to_vec();
    alphas.sort_by(f64::total_cmp);
    let mut attacks = attacks.to_vec();
    attacks.sort();
    attacks.dedup();
    let mut snrs = snr_grid.to_vec();
    snrs.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    for &attack in &attacks {
        for &snr_db in &snrs {
            let cfg = FerConfig {
                snr_db,
                target_errors: None,
                ..*fer
            };
            for &alpha in &alphas {
                let prepared = prepare_attack(Some(attack), decoder, snr_db, alpha, settings)?;
                let run = simulate(&[decoder], &prepared.perturber, &cfg)?;
                rows.push(AblationRow {
                    attack: Some(attack),
                    snr_db,
                    alpha,
                    stats: run.stats[0],
                    errors: run.errors.into_iter().next().expect("one decoder"),
                });
            }
        }
    }
    let diagnostics = monotonicity(&rows);
    Ok(AblationTable { rows, diagnostics })
}

fn monotonicity(rows: &[AblationRow]) -> Vec<MonotonicityDiagnostic> {
    let mut series: BTreeMap<(Option<AttackKind>, u64), Vec<&AblationRow>> = BTreeMap::new();
    for r in rows {
        series.entry((r.attack, r.snr_db.to_bits())).or_default().push(r);
    }
    let random_fer = |snr_bits: u64, alpha: f64| {
        series
            .get(&(Some(AttackKind::Random), snr_bits))
            .and_then(|s| s.iter().find(|r| r.alpha == alpha))
            .map(|r| r.stats.fer())
    };
    series
        .iter()
        .map(|(&(attack, snr_bits), s)| {
            let mut non_decreasing = true;
            let mut significant_drops = Vec::new();
            for w in s.windows(2) {
                if w[1].stats.fer() < w[0].stats.fer() {
                    non_decreasing = false;
                    let p = PairedCounts::from_outcomes(&w[0].errors, &w[1].errors).p_value_a_worse();
                    if p < 0.01 {
                        significant_drops.push((w[0].alpha, w[1].alpha, p));
                    }
                }
            }
            let gap_over_random = if attack == Some(AttackKind::Random) {
                Vec::new()
            } else {
                s.iter()
                    .filter_map(|r| random_fer(snr_bits, r.alpha).map(|f| (r.alpha, r.stats.fer() - f)))
                    .collect()
            };
            MonotonicityDiagnostic {
                attack,
                snr_db: f64::from_bits(snr_bits),
                non_decreasing,
                significant_drops,
                gap_over_random,
            }
        })
        .collect()
}
