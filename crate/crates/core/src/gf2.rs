//! Dense GF(2) matrices with rows packed into 64-bit words.

use std::fmt;

const WORD: usize = 64;

#[inline]
fn words_for(cols: usize) -> usize {
    cols.div_ceil(WORD)
}

/// Packs a 0/1 slice into words, bit `i` of the slice at bit `i % 64` of word `i / 64`.
pub fn pack_bits(bits: &[u8]) -> Vec<u64> {
    let mut out = vec![0u64; words_for(bits.len())];
    for (i, &b) in bits.iter().enumerate() {
        if b & 1 == 1 {
            out[i / WORD] |= 1 << (i % WORD);
        }
    }
    out
}

/// Unpacks the first `len` bits of a packed word slice.
pub fn unpack_bits(words: &[u64], len: usize) -> Vec<u8> {
    (0..len).map(|i| ((words[i / WORD] >> (i % WORD)) & 1) as u8).collect()
}

/// A `rows × cols` binary matrix.
#[derive(Clone, PartialEq, Eq)]
pub struct Gf2Matrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl Gf2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols);
        Self {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    /// Builds a matrix from rows of 0/1 entries. All rows must share one length.
    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged row {r}");
            m.row_words_mut(r).copy_from_slice(&pack_bits(row));
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        (self.data[r * self.stride + c / WORD] >> (c % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        let w = &mut self.data[r * self.stride + c / WORD];
        if v {
            *w |= 1 << (c % WORD);
        } else {
            *w &= !(1 << (c % WORD));
        }
    }

    #[inline]
    pub fn row_words(&self, r: usize) -> &[u64] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    #[inline]
    fn row_words_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.data[r * self.stride..(r + 1) * self.stride]
    }

    pub fn row(&self, r: usize) -> Vec<u8> {
        unpack_bits(self.row_words(r), self.cols)
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows).map(|r| self.row(r)).collect()
    }

    /// Column indices holding a one in row `r`.
    pub fn row_support(&self, r: usize) -> Vec<usize> {
        (0..self.cols).filter(|&c| self.get(r, c)).collect()
    }

    /// `row[dst] ^= row[src]`.
    fn xor_rows(&mut self, dst: usize, src: usize) {
        debug_assert_ne!(dst, src);
        let s = self.stride;
        let (a, b) = if dst < src {
            let (lo, hi) = self.data.split_at_mut(src * s);
            (&mut lo[dst * s..(dst + 1) * s], &hi[..s])
        } else {
            let (lo, hi) = self.data.split_at_mut(dst * s);
            (&mut hi[..s], &lo[src * s..(src + 1) * s])
        };
        for (x, y) in a.iter_mut().zip(b) {
            *x ^= *y;
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for w in 0..self.stride {
            self.data.swap(a * self.stride + w, b * self.stride + w);
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    t.set(c, r, true);
                }
            }
        }
        t
    }

    /// Matrix product over GF(2).
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "dimension mismatch in GF(2) product");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                if self.get(r, k) {
                    for w in 0..out.stride {
                        out.data[r * out.stride + w] ^= other.data[k * other.stride + w];
                    }
                }
            }
        }
        out
    }

    /// `M · v` for a packed column vector `v` of length `cols`; returns packed length `rows`.
    pub fn mul_packed(&self, v: &[u64]) -> Vec<u64> {
        debug_assert_eq!(v.len(), self.stride);
        let mut out = vec![0u64; words_for(self.rows)];
        for r in 0..self.rows {
            let parity = self
                .row_words(r)
                .iter()
                .zip(v)
                .fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones())
                & 1;
            if parity == 1 {
                out[r / WORD] |= 1 << (r % WORD);
            }
        }
        out
    }

    /// `v · M` for a packed row vector `v` of length `rows`; returns packed length `cols`.
    pub fn left_mul_packed(&self, v: &[u64]) -> Vec<u64> {
        let mut out = vec![0u64; self.stride];
        for r in 0..self.rows {
            if (v[r / WORD] >> (r % WORD)) & 1 == 1 {
                for (o, w) in out.iter_mut().zip(self.row_words(r)) {
                    *o ^= *w;
                }
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&w| w == 0)
    }

    /// Reduced row echelon form in place; returns pivot columns in row order.
    pub fn rref_in_place(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let Some(p) = (r..self.rows).find(|&i| self.get(i, c)) else {
                continue;
            };
            self.swap_rows(r, p);
            for i in 0..self.rows {
                if i != r && self.get(i, c) {
                    self.xor_rows(i, r);
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        self.clone().rref_in_place().len()
    }

    /// A basis of the right null space `{x : M xᵀ = 0}`, one basis vector per row.
    ///
    /// Basis vector `j` has a one at the `j`-th non-pivot column and zeros at every other
    /// non-pivot column, so the returned matrix is systematic on those columns.
    pub fn null_space(&self) -> (Self, Vec<usize>) {
        let mut red = self.clone();
        let pivots = red.rref_in_place();
        let mut is_pivot = vec![false; self.cols];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        let free: Vec<usize> = (0..self.cols).filter(|&c| !is_pivot[c]).collect();
        let mut basis = Self::zeros(free.len(), self.cols);
        for (j, &f) in free.iter().enumerate() {
            basis.set(j, f, true);
            for (r, &p) in pivots.iter().enumerate() {
                if red.get(r, f) {
                    basis.set(j, p, true);
                }
            }
        }
        (basis, free)
    }
}

impl fmt::Debug for Gf2Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Gf2Matrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let s: String = self.row(r).iter().map(|&b| if b == 1 { '1' } else { '0' }).collect();
            writeln!(f, "  {s}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<Vec<u8>> {
        (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(0..2u8)).collect())
            .collect()
    }

    fn naive_mat_vec(m: &[Vec<u8>], v: &[u8]) -> Vec<u8> {
        m.iter()
            .map(|row| {
                let mut acc = 0u8;
                for (a, b) in row.iter().zip(v) {
                    acc ^= a & b;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn packed_product_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(r, c) in &[(1, 1), (7, 63), (25, 64), (61, 121), (3, 200)] {
            let rows = random_matrix(&mut rng, r, c);
            let m = Gf2Matrix::from_rows(&rows);
            for _ in 0..20 {
                let v: Vec<u8> = (0..c).map(|_| rng.random_range(0..2u8)).collect();
                let got = unpack_bits(&m.mul_packed(&pack_bits(&v)), r);
                assert_eq!(got, naive_mat_vec(&rows, &v));
            }
        }
    }

    #[test]
    fn left_product_matches_transpose_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = random_matrix(&mut rng, 12, 70);
        let m = Gf2Matrix::from_rows(&rows);
        let t = m.transpose();
        let v: Vec<u8> = (0..12).map(|_| rng.random_range(0..2u8)).collect();
        let a = unpack_bits(&m.left_mul_packed(&pack_bits(&v)), 70);
        let b = unpack_bits(&t.mul_packed(&pack_bits(&v)), 70);
        assert_eq!(a, b);
    }

    #[test]
    fn identity_has_full_rank() {
        assert_eq!(Gf2Matrix::identity(130).rank(), 130);
        assert_eq!(Gf2Matrix::zeros(5, 9).rank(), 0);
    }

    proptest! {
        #[test]
        fn null_space_is_orthogonal_and_complete(seed in any::<u64>(), r in 1usize..12, c in 1usize..80) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Gf2Matrix::from_rows(&random_matrix(&mut rng, r, c));
            let (basis, free) = m.null_space();
            prop_assert_eq!(basis.rows(), c - m.rank());
            prop_assert_eq!(free.len(), basis.rows());
            prop_assert!(m.mul(&basis.transpose()).is_zero());
            prop_assert_eq!(basis.rank(), basis.rows());
        }
    }
}
