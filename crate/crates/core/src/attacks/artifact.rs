//! Text serialization of attacks, for reuse across decoders and implementations.
//!
//! ```text
//! # robustdec attack artifact v1
//! kind = uap_pca
//! code = ldpc_49_24
//! alpha = 0.01
//! epsilon = 0.0612...
//! source_decoder = mlp
//! seed = 7
//! frame_seed = 11
//! hyper.<name> = <value>        (any number of lines)
//! delta                          (universal attacks only)
//! <one decimal float per line, n lines>
//! ```

use super::{AttackKind, BUDGET_SLACK};
use crate::error::{Error, Result};
use crate::smoothing::l2_norm;
use std::collections::BTreeMap;
use std::fmt::{Display, Write as _};
use std::path::Path;

const HEADER: &str = "# robustdec attack artifact v1";

#[derive(Debug, Clone, PartialEq)]
pub struct AttackArtifact {
    pub kind: AttackKind,
    pub code_id: String,
    pub alpha: f64,
    pub epsilon: f64,
    pub source_decoder: String,
    pub seed: u64,
    pub frame_seed: u64,
    pub hyperparameters: BTreeMap<String, String>,
    /// The shared perturbation; absent for per-frame attacks, which are regenerated.
    pub delta: Option<Vec<f64>>,
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

impl AttackArtifact {
    pub fn new(kind: AttackKind, code_id: &str, source_decoder: &str, alpha: f64, epsilon: f64) -> Self {
        Self {
            kind,
            code_id: code_id.to_string(),
            alpha,
            epsilon,
            source_decoder: source_decoder.to_string(),
            seed: 0,
            frame_seed: 0,
            hyperparameters: BTreeMap::new(),
            delta: None,
        }
    }

    pub fn set_hyper(&mut self, key: &str, value: impl Display) {
        self.hyperparameters.insert(key.to_string(), value.to_string());
    }

    pub fn hyper(&self, key: &str) -> Option<&str> {
        self.hyperparameters.get(key).map(String::as_str)
    }

    /// `‖δ‖ ≤ ε` up to rounding slack (trivially true without a stored δ).
    pub fn within_budget(&self) -> bool {
        self.delta
            .as_ref()
            .is_none_or(|d| l2_norm(d) <= self.epsilon + BUDGET_SLACK)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        let _ = writeln!(s, "kind = {}", self.kind);
        let _ = writeln!(s, "code = {}", self.code_id);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "source_decoder = {}", self.source_decoder);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "frame_seed = {}", self.frame_seed);
        for (k, v) in &self.hyperparameters {
            let _ = writeln!(s, "hyper.{k} = {v}");
        }
        if let Some(delta) = &self.delta {
            let _ = writeln!(s, "delta");
            for v in delta {
                // `{}` on f64 prints the shortest exactly round-tripping decimal
                let _ = writeln!(s, "{v}");
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields: BTreeMap<String, String> = BTreeMap::new();
        let mut hyper = BTreeMap::new();
        let mut delta: Option<Vec<f64>> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if let Some(d) = delta.as_mut() {
                if line.is_empty() {
                    continue;
                }
                d.push(
                    line.parse()
                        .map_err(|_| bad(line_no, format!("not a number: {line:?}")))?,
                );
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "delta" {
                delta = Some(Vec::new());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(line_no, format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim().to_string());
            if let Some(h) = k.strip_prefix("hyper.") {
                hyper.insert(h.to_string(), v);
            } else {
                fields.insert(k.to_string(), v);
            }
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| bad(0, format!("missing field {k}")));
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| bad(0, format!("field {k} is not a number")))
        };
        let int = |k: &str| -> Result<u64> {
            fields.get(k).map_or(Ok(0), |v| {
                v.parse().map_err(|_| bad(0, format!("field {k} is not an integer")))
            })
        };
        let kind = AttackKind::parse(get("kind")?).ok_or_else(|| bad(0, "unknown attack kind"))?;
        let artifact = Self {
            kind,
            code_id: get("code")?.clone(),
            alpha: num("alpha")?,
            epsilon: num("epsilon")?,
            source_decoder: get("source_decoder")?.clone(),
            seed: int("seed")?,
            frame_seed: int("frame_seed")?,
            hyperparameters: hyper,
            delta,
        };
        if kind.is_universal() && artifact.delta.is_none() {
            return Err(bad(0, "universal artifact has no delta block"));
        }
        if !artifact.within_budget() {
            return Err(Error::Input(format!(
                "stored delta exceeds epsilon {}",
                artifact.epsilon
            )));
        }
        Ok(artifact)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
