//! Portable checkpoint layout:
//!
//! ```text
//! bytes 0..8   b"RDMLPv1\n"
//! bytes 8..12  header length L, u32 little-endian
//! next L bytes UTF-8 header, one `key = value` per line:
//!              code, widths (comma separated), seed, activation
//! remainder    f64 little-endian parameters; for each layer in order,
//!              weights row-major as (out, in), then the bias vector
//! ```

use super::{Activation, Layer, MlpDecoder};
use crate::code::LinearCode;
use crate::decoders::Decoder as _;
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use std::path::Path;
use std::sync::Arc;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RDMLPv1\n";

fn ck_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Checkpoint(msg.into()))
}

pub fn save_checkpoint(model: &MlpDecoder) -> Vec<u8> {
    let widths: Vec<String> = model.widths().iter().map(usize::to_string).collect();
    let header = format!(
        "code = {}\nwidths = {}\nseed = {}\nactivation = {}\n",
        model.code().id(),
        widths.join(","),
        model.seed(),
        model.activation()
    );
    let mut out = Vec::with_capacity(12 + header.len() + 8 * model.parameter_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for layer in model.layers() {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Restores a model; `code` must be the code the checkpoint was trained for.
pub fn load_checkpoint(bytes: &[u8], code: Arc<LinearCode>) -> Result<MlpDecoder> {
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return ck_err("missing RDMLPv1 magic");
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let Some(header) = bytes.get(12..12 + len) else {
        return ck_err("truncated header");
    };
    let header = std::str::from_utf8(header).map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
    let (mut id, mut widths, mut seed, mut activation) = (None, None, None, None);
    for line in header.lines().filter(|l| !l.trim().is_empty()) {
        let Some((k, v)) = line.split_once('=') else {
            return ck_err(format!("bad header line {line:?}"));
        };
        let v = v.trim();
        match k.trim() {
            "code" => id = Some(v.to_string()),
            "widths" => {
                let w: std::result::Result<Vec<usize>, _> = v.split(',').map(|s| s.trim().parse()).collect();
                widths = Some(w.map_err(|_| Error::Checkpoint(format!("bad widths {v:?}")))?);
            }
            "seed" => {
                seed = Some(
                    v.parse::<u64>()
                        .map_err(|_| Error::Checkpoint(format!("bad seed {v:?}")))?,
                )
            }
            "activation" => {
                activation =
                    Some(Activation::parse(v).ok_or_else(|| Error::Checkpoint(format!("unknown activation {v:?}")))?)
            }
            _ => {}
        }
    }
    let (Some(id), Some(widths), Some(seed), Some(activation)) = (id, widths, seed, activation) else {
        return ck_err("header lacks code, widths, seed or activation");
    };
    if id != code.id() {
        return ck_err(format!("checkpoint is for code {id}, not {}", code.id()));
    }
    if widths.len() < 2 {
        return ck_err("need at least two widths");
    }
    let mut body = &bytes[12 + len..];
    let expected: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    if body.len() != 8 * expected {
        return ck_err(format!(
            "expected {} parameter bytes, found {}",
            8 * expected,
            body.len()
        ));
    }
    let mut take = |count: usize| -> Vec<f64> {
        let (head, rest) = body.split_at(8 * count);
        body = rest;
        head.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect()
    };
    let mut layers = Vec::new();
    for w in widths.windows(2) {
        let weights = Array2::from_shape_vec((w[1], w[0]), take(w[0] * w[1])).expect("sized above");
        let bias = Array1::from(take(w[1]));
        layers.push(Layer { weights, bias });
    }
    if layers
        .iter()
        .any(|l| l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()))
    {
        return ck_err("non-finite parameter");
    }
    MlpDecoder::from_layers(code, layers, activation, seed)
}

pub fn write_checkpoint(model: &MlpDecoder, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, save_checkpoint(model))?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>, code: Arc<LinearCode>) -> Result<MlpDecoder> {
    load_checkpoint(&std::fs::read(path)?, code)
}
