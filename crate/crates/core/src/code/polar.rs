//! Polar codes in natural (non bit-reversed) order: `x = u · F^{⊗m}`, `F = [[1,0],[1,1]]`.

use super::{CodeFamily, LinearCode};
use crate::error::{input_err, Result};
use crate::gf2::Gf2Matrix;

/// Frozen-bit layout of a polar code.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarLayout {
    /// `frozen[i]` is true when input bit `u_i` is fixed to zero.
    pub frozen: Vec<bool>,
    pub design_snr_db: f64,
}

impl PolarLayout {
    pub fn info_indices(&self) -> Vec<usize> {
        (0..self.frozen.len()).filter(|&i| !self.frozen[i]).collect()
    }
}

/// Bhattacharyya parameters of the `n` synthetic channels.
///
/// Starts from `Z0 = exp(-R · 10^{snr/10})` and applies `Z⁻ = 2Z − Z²` (first half of each
/// split) and `Z⁺ = Z²` (second half). Computed in the log domain so long codes do not
/// underflow to ties at zero; the returned values are `ln Z`.
pub fn bhattacharyya_parameters(n: usize, rate: f64, design_snr_db: f64) -> Vec<f64> {
    let z0 = -rate * 10f64.powf(design_snr_db / 10.0);
    let mut z = vec![z0];
    while z.len() < n {
        let mut next = Vec::with_capacity(2 * z.len());
        for &lz in &z {
            // ln(2Z − Z²) = ln Z + ln(2 − Z)
            next.push(lz + (2.0 - lz.exp()).ln());
            next.push(2.0 * lz);
        }
        z = next;
    }
    z
}

/// In-place polar transform `x = u · F^{⊗m}` over GF(2).
pub fn polar_transform(bits: &mut [u8]) {
    let n = bits.len();
    let mut half = n / 2;
    while half >= 1 {
        for block in (0..n).step_by(2 * half) {
            for i in block..block + half {
                bits[i] ^= bits[i + half];
            }
        }
        half /= 2;
    }
}

/// Builds a polar code whose `n - k` least reliable channels are frozen.
pub fn build_polar(n: usize, k: usize, design_snr_db: f64) -> Result<LinearCode> {
    if n < 2 || !n.is_power_of_two() {
        return input_err(format!("polar length must be a power of two ≥ 2, got {n}"));
    }
    if k == 0 || k >= n {
        return input_err(format!("need 0 < k < n, got k = {k}"));
    }
    let lz = bhattacharyya_parameters(n, k as f64 / n as f64, design_snr_db);
    let mut order: Vec<usize> = (0..n).collect();
    // largest Z first; ties freeze the lower index
    order.sort_by(|&a, &b| lz[b].total_cmp(&lz[a]).then(a.cmp(&b)));
    let mut frozen = vec![false; n];
    for &i in &order[..n - k] {
        frozen[i] = true;
    }
    // F^{⊗m}[i][j] = 1 iff j ⊆ i bitwise; F is an involution over GF(2), so the
    // frozen columns of F span the dual code.
    let in_f = |i: usize, j: usize| j & !i == 0;
    let info: Vec<usize> = (0..n).filter(|&i| !frozen[i]).collect();
    let frozen_idx: Vec<usize> = (0..n).filter(|&i| frozen[i]).collect();
    let mut g = Gf2Matrix::zeros(k, n);
    for (r, &i) in info.iter().enumerate() {
        for j in 0..n {
            if in_f(i, j) {
                g.set(r, j, true);
            }
        }
    }
    let mut h = Gf2Matrix::zeros(n - k, n);
    for (r, &f) in frozen_idx.iter().enumerate() {
        for j in 0..n {
            if in_f(j, f) {
                h.set(r, j, true);
            }
        }
    }
    let code = LinearCode::from_matrices(format!("polar_{n}_{k}"), CodeFamily::Polar, g, h)?;
    Ok(code.with_polar_layout(PolarLayout { frozen, design_snr_db }))
}
