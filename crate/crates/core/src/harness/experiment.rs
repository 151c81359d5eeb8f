//! Config-driven experiment grids with CSV results and a reproducibility manifest.

use super::simulate::{simulate, FerConfig};
use super::stats::FerStats;
use super::sweeps::{attack_label, parse_attack, prepare_attack, AttackSettings};
use crate::attacks::{AttackKind, PgdConfig, UapConfig};
use crate::channel::{derive_seed, MessageMode};
use crate::code::{resolve_code, LinearCode};
use crate::decoders::{BeliefPropagation, CheckRule, Decoder, MaximumLikelihood, SuccessiveCancellation};
use crate::error::{Error, Result};
use crate::neural::{read_checkpoint, train, write_checkpoint, Activation, MlpDecoder, Optimizer, TrainConfig};
use crate::smoothing::{EstimatorKind, SmoothingConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Name of the marker file written when a run fails.
pub const FAILURE_MARKER: &str = "FAILED";

const EVAL_TAG: u64 = 0xE7A1;
const MLP_TAG: u64 = 0x3317;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingSection {
    pub nu: f64,
    pub samples: usize,
    pub estimator: String,
    pub loss_clip: f64,
}

impl Default for SmoothingSection {
    fn default() -> Self {
        let d = SmoothingConfig::default();
        Self {
            nu: d.nu,
            samples: d.samples,
            estimator: d.estimator.as_str().to_string(),
            loss_clip: d.loss_clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    pub pgd_steps: usize,
    pub pgd_step_factor: f64,
    pub pgd_random_start: bool,
    pub uap_batches: usize,
    pub uap_lr: f64,
    /// Frames the universal attacks are crafted on.
    pub craft_frames: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        let (p, u) = (PgdConfig::default(), UapConfig::default());
        Self {
            pgd_steps: p.steps,
            pgd_step_factor: p.step_factor,
            pgd_random_start: p.random_start,
            uap_batches: u.batches,
            uap_lr: u.lr,
            craft_frames: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderSection {
    pub bp_iterations: usize,
    pub min_sum_normalization: f64,
}

impl Default for DecoderSection {
    fn default() -> Self {
        Self {
            bp_iterations: 10,
            min_sum_normalization: 1.0,
        }
    }
}

/// The neural decoder is read from `checkpoint` when it exists, otherwise trained and
/// saved there (or into the output directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpSection {
    pub checkpoint: Option<PathBuf>,
    pub hidden: Vec<usize>,
    pub activation: String,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: String,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
}

impl Default for MlpSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            checkpoint: None,
            hidden: vec![128, 128],
            activation: Activation::default().as_str().to_string(),
            steps: t.steps,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: t.optimizer.as_str().to_string(),
            snr_min_db: t.snr_range_db.0,
            snr_max_db: t.snr_range_db.1,
        }
    }
}

impl MlpSection {
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let optimizer = Optimizer::parse(&self.optimizer)
            .ok_or_else(|| Error::Config(format!("unknown optimizer {:?}", self.optimizer)))?;
        Ok(TrainConfig {
            snr_range_db: (self.snr_min_db, self.snr_max_db),
            batch_size: self.batch_size,
            steps: self.steps,
            learning_rate: self.learning_rate,
            seed,
            optimizer,
            message_mode: MessageMode::Uniform,
        })
    }
}

/// One experiment grid: every decoder × attack × SNR × α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub code: String,
    pub decoders: Vec<String>,
    #[serde(default = "default_snr")]
    pub snr_db: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_attacks")]
    pub attacks: Vec<String>,
    /// Decoder the attacks are crafted on; each target attacks itself when absent.
    #[serde(default)]
    pub source_decoder: Option<String>,
    #[serde(default = "default_frames")]
    pub frames: usize,
    /// Frame errors after which a cell stops early; 0 always runs the full budget.
    #[serde(default = "default_target_errors")]
    pub target_errors: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub smoothing: SmoothingSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub decoder: DecoderSection,
    #[serde(default)]
    pub mlp: MlpSection,
}

fn default_snr() -> Vec<f64> {
    vec![4.0, 5.0, 6.0]
}
fn default_alpha() -> Vec<f64> {
    vec![0.01]
}
fn default_attacks() -> Vec<String> {
    vec!["none".into()]
}
fn default_frames() -> usize {
    1_000_000
}
fn default_target_errors() -> usize {
    100
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: &str| Err(Error::Config(m.to_string()));
        if self.decoders.is_empty() || self.snr_db.is_empty() || self.alpha.is_empty() || self.attacks.is_empty() {
            return cfg_err("decoder, SNR, alpha and attack lists must be nonempty");
        }
        if self.frames == 0 {
            return cfg_err("frame budget must be positive");
        }
        if self.alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return cfg_err("alpha values must be finite and non-negative");
        }
        for a in &self.attacks {
            parse_attack(a).map_err(|e| Error::Config(e.to_string()))?;
        }
        for d in self.decoders.iter().chain(&self.source_decoder) {
            if !DECODER_NAMES.contains(&d.as_str()) {
                return Err(Error::Config(format!(
                    "unknown decoder {d:?}; expected one of {DECODER_NAMES:?}"
                )));
            }
        }
        self.smoothing_config()?.validate()?;
        Ok(())
    }

    pub fn smoothing_config(&self) -> Result<SmoothingConfig> {
        let estimator = EstimatorKind::parse(&self.smoothing.estimator)
            .ok_or_else(|| Error::Config(format!("unknown estimator {:?}", self.smoothing.estimator)))?;
        Ok(SmoothingConfig {
            nu: self.smoothing.nu,
            samples: self.smoothing.samples,
            seed: 0,
            estimator,
            loss_clip: self.smoothing.loss_clip,
        })
    }

    pub fn attack_settings(&self) -> Result<AttackSettings> {
        Ok(AttackSettings {
            smoothing: self.smoothing_config()?,
            pgd: PgdConfig {
                steps: self.attack.pgd_steps,
                step_factor: self.attack.pgd_step_factor,
                random_start: self.attack.pgd_random_start,
                seed: 0,
            },
            uap: UapConfig {
                batches: self.attack.uap_batches,
                lr: self.attack.uap_lr,
                batch_size: None,
                seed: 0,
            },
            craft_frames: self.attack.craft_frames,
            seed: self.seed,
        })
    }

    pub fn eval_seed(&self) -> u64 {
        derive_seed(self.seed, EVAL_TAG)
    }

    pub fn mlp_seed(&self) -> u64 {
        derive_seed(self.seed, MLP_TAG)
    }

    pub fn fer_config(&self, snr_db: f64) -> FerConfig {
        FerConfig {
            snr_db,
            frames: self.frames,
            target_errors: (self.target_errors > 0).then_some(self.target_errors),
            seed: self.eval_seed(),
            ..FerConfig::default()
        }
    }
}

/// Decoder names accepted in configs and on the command line.
pub const DECODER_NAMES: [&str; 5] = ["sum_product", "min_sum", "sc", "ml", "mlp"];

/// Builds a classical decoder by name (`mlp` is handled by [`obtain_mlp`]).
pub fn build_decoder(name: &str, code: Arc<LinearCode>, opts: &DecoderSection) -> Result<Box<dyn Decoder>> {
    Ok(match name {
        "sum_product" => Box::new(BeliefPropagation::new(code, CheckRule::SumProduct, opts.bp_iterations)),
        "min_sum" => Box::new(BeliefPropagation::new(
            code,
            CheckRule::MinSum {
                normalization: opts.min_sum_normalization,
            },
            opts.bp_iterations,
        )),
        "sc" => Box::new(SuccessiveCancellation::new(code)?),
        "ml" => Box::new(MaximumLikelihood::new(code)?),
        other => return Err(Error::Config(format!("cannot build decoder {other:?} here"))),
    })
}

/// Loads the configured checkpoint, or trains a fresh model and saves it.
pub fn obtain_mlp(
    code: Arc<LinearCode>,
    section: &MlpSection,
    seed: u64,
    fallback_path: &Path,
) -> Result<(MlpDecoder, PathBuf)> {
    let path = section
        .checkpoint
        .clone()
        .unwrap_or_else(|| fallback_path.to_path_buf());
    if path.exists() {
        return Ok((read_checkpoint(&path, code)?, path));
    }
    let activation = Activation::parse(&section.activation)
        .ok_or_else(|| Error::Config(format!("unknown activation {:?}", section.activation)))?;
    let mut model = MlpDecoder::new(code, &section.hidden, activation, seed)?;
    train(&mut model, &section.train_config(seed)?)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_checkpoint(&model, &path)?;
    Ok((model, path))
}

/// Builds the named decoder as configured; for `mlp` also returns the checkpoint path.
pub fn instantiate_decoder(
    cfg: &ExperimentConfig,
    code: Arc<LinearCode>,
    name: &str,
) -> Result<(Box<dyn Decoder>, Option<PathBuf>)> {
    if name == "mlp" {
        let fallback = cfg.output_dir.join("mlp.ckpt");
        let (model, path) = obtain_mlp(code, &cfg.mlp, cfg.mlp_seed(), &fallback)?;
        return Ok((Box::new(model), Some(path)));
    }
    Ok((build_decoder(name, code, &cfg.decoder)?, None))
}

/// SHA-256 of the parity-check matrix as rows of `0`/`1` characters.
pub fn parity_check_sha256(code: &LinearCode) -> String {
    let h = code.parity_check();
    let mut hasher = Sha256::new();
    for r in 0..h.rows() {
        let row: String = h.row(r).iter().map(|&b| if b == 1 { '1' } else { '0' }).collect();
        hasher.update(row.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub code: String,
    pub decoder: String,
    pub attack: String,
    pub source_decoder: String,
    pub snr_db: f64,
    pub alpha: f64,
    pub frames: usize,
    pub frame_errors: usize,
    pub fer: f64,
    pub fer_inverse: String,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

impl ResultRow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        code: &str,
        decoder: &str,
        attack: Option<AttackKind>,
        source: &str,
        snr_db: f64,
        alpha: f64,
        stats: &FerStats,
        seed: u64,
    ) -> Self {
        let (ci_low, ci_high) = stats.wilson_95();
        Self {
            code: code.to_string(),
            decoder: decoder.to_string(),
            attack: attack_label(attack).to_string(),
            source_decoder: source.to_string(),
            snr_db,
            alpha,
            frames: stats.frames,
            frame_errors: stats.frame_errors,
            fer: stats.fer(),
            fer_inverse: stats.fer_inverse().to_string(),
            ci_low,
            ci_high,
            seed,
        }
    }
}

pub fn write_rows(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "code",
            "decoder",
            "attack",
            "source_decoder",
            "snr_db",
            "alpha",
            "frames",
            "frame_errors",
            "fer",
            "fer_inverse",
            "ci_low",
            "ci_high",
            "seed",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: String,
    pub error: Option<String>,
    pub code_id: String,
    pub n: usize,
    pub k: usize,
    pub parity_check_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub artifacts: Vec<String>,
    pub mlp_checkpoint: Option<String>,
    pub rows: usize,
    pub config: ExperimentConfig,
}

/// Summary of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    pub results_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Runs the full grid into `cfg.output_dir`.
///
/// Writes `results.csv`, `manifest.json` and `artifacts/*.txt`. On failure the rows
/// finished so far are still written, the manifest records the error, and a `FAILED`
/// marker file is created.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out.join("artifacts"))?;
    let marker = out.join(FAILURE_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker)?;
    }
    let code = Arc::new(resolve_code(&cfg.code)?);
    let mut seeds = BTreeMap::new();
    seeds.insert("base".to_string(), cfg.seed);
    seeds.insert("eval_frames".to_string(), cfg.eval_seed());
    let mut manifest = Manifest {
        status: "running".into(),
        error: None,
        code_id: code.id().to_string(),
        n: code.n(),
        k: code.k(),
        parity_check_sha256: parity_check_sha256(&code),
        seeds,
        artifacts: Vec::new(),
        mlp_checkpoint: None,
        rows: 0,
        config: cfg.clone(),
    };
    let mut rows = Vec::new();
    let result = run_grid(cfg, code, &mut rows, &mut manifest);
    let results_path = out.join("results.csv");
    let manifest_path = out.join("manifest.json");
    manifest.rows = rows.len();
    match &result {
        Ok(()) => manifest.status = "ok".into(),
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(e.to_string());
        }
    }
    write_rows(&results_path, &rows)?;
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&manifest_path, json)?;
    if let Err(e) = result {
        std::fs::write(&marker, format!("{e}\n"))?;
        return Err(e);
    }
    Ok(ExperimentOutcome {
        rows,
        results_path,
        manifest_path,
    })
}

fn run_grid(
    cfg: &ExperimentConfig,
    code: Arc<LinearCode>,
    rows: &mut Vec<ResultRow>,
    manifest: &mut Manifest,
) -> Result<()> {
    let settings = cfg.attack_settings()?;
    manifest.seeds.insert("craft_frames".into(), settings.craft_seed());
    let mut decoders: BTreeMap<String, Box<dyn Decoder>> = BTreeMap::new();
    let mut ensure = |decoders: &mut BTreeMap<String, Box<dyn Decoder>>, name: &str| -> Result<()> {
        if decoders.contains_key(name) {
            return Ok(());
        }
        let (d, checkpoint) = instantiate_decoder(cfg, code.clone(), name)?;
        if let Some(path) = checkpoint {
            manifest.seeds.insert("mlp".into(), cfg.mlp_seed());
            manifest.mlp_checkpoint = Some(path.display().to_string());
        }
        decoders.insert(name.to_string(), d);
        Ok(())
    };
    let attacks: Vec<Option<AttackKind>> = cfg.attacks.iter().map(|a| parse_attack(a)).collect::<Result<_>>()?;
    for (si, &snr_db) in cfg.snr_db.iter().enumerate() {
        let fer = cfg.fer_config(snr_db);
        for target_name in &cfg.decoders {
            let source_name = cfg.source_decoder.as_ref().unwrap_or(target_name);
            ensure(&mut decoders, target_name)?;
            ensure(&mut decoders, source_name)?;
            let target = decoders[target_name].as_ref();
            let source = decoders[source_name].as_ref();
            for &attack in &attacks {
                let alphas: &[f64] = if attack.is_some() { &cfg.alpha } else { &[0.0] };
                for (ai, &alpha) in alphas.iter().enumerate() {
                    let prepared = prepare_attack(attack, source, snr_db, alpha, &settings)?;
                    if let Some(a) = prepared.artifact.as_ref().filter(|a| a.delta.is_some()) {
                        let name = format!("{}_{}_{}_snr{si}_a{ai}.txt", a.kind, source_name, target_name);
                        a.write(cfg.output_dir.join("artifacts").join(&name))?;
                        manifest.artifacts.push(format!("artifacts/{name}"));
                    }
                    let stats = simulate(&[target], &prepared.perturber, &fer)?.stats[0];
                    let source_label = if attack.is_some() { source_name.as_str() } else { "-" };
                    rows.push(ResultRow::new(
                        code.id(),
                        target_name,
                        attack,
                        source_label,
                        snr_db,
                        alpha,
                        &stats,
                        fer.seed,
                    ));
                }
            }
        }
    }
    Ok(())
}
