//! Bundled parity-check matrices and code-id resolution.
//!
//! The two LDPC matrices are regular column-weight-3 codes without 4-cycles, generated
//! once with a fixed seed (see `codes/README.md`). They are not the MacKay database
//! matrices; experiment manifests record the matrix hash so results stay attributable.

use super::{build_polar, load_alist, CodeFamily, LinearCode};
use crate::error::{Error, Result};
use std::path::Path;

const BUNDLED: &[(&str, CodeFamily, &str)] = &[
    (
        "hamming_7_4",
        CodeFamily::Hamming,
        include_str!("../../codes/hamming_7_4.alist"),
    ),
    (
        "hamming_15_11",
        CodeFamily::Hamming,
        include_str!("../../codes/hamming_15_11.alist"),
    ),
    (
        "repetition_3_1",
        CodeFamily::Repetition,
        include_str!("../../codes/repetition_3_1.alist"),
    ),
    (
        "ldpc_49_24",
        CodeFamily::Ldpc,
        include_str!("../../codes/ldpc_49_24.alist"),
    ),
    (
        "ldpc_121_60",
        CodeFamily::Ldpc,
        include_str!("../../codes/ldpc_121_60.alist"),
    ),
];

/// Default design SNR for polar construction, in dB.
pub const DEFAULT_POLAR_DESIGN_SNR_DB: f64 = 2.0;

pub fn bundled_ids() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(id, _, _)| *id)
}

/// Raw alist text of a bundled code.
pub fn bundled_alist(id: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(i, _, _)| *i == id).map(|(_, _, t)| *t)
}

/// Resolves a code id.
///
/// Accepted forms: a bundled id (`hamming_7_4`, `ldpc_121_60`, ...), `polar_<n>_<k>`
/// (Bhattacharyya construction at 2 dB), or a path to an `.alist` file.
pub fn resolve_code(id: &str) -> Result<LinearCode> {
    if let Some((_, family, text)) = BUNDLED.iter().find(|(i, _, _)| *i == id) {
        return load_alist(id, *family, text);
    }
    if let Some(rest) = id.strip_prefix("polar_") {
        let parts: Vec<&str> = rest.split('_').collect();
        if let [n, k] = parts.as_slice() {
            let n: usize = n.parse().map_err(|_| Error::Input(format!("bad polar id {id}")))?;
            let k: usize = k.parse().map_err(|_| Error::Input(format!("bad polar id {id}")))?;
            return build_polar(n, k, DEFAULT_POLAR_DESIGN_SNR_DB);
        }
        return Err(Error::Input(format!("bad polar id {id}")));
    }
    if id.ends_with(".alist") {
        let text = std::fs::read_to_string(Path::new(id))?;
        let stem = Path::new(id)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(id)
            .to_string();
        return load_alist(stem, CodeFamily::Custom, &text);
    }
    Err(Error::Input(format!("unknown code id {id:?}")))
}
