//! Symmetric eigenproblems for the gradient second-moment matrix.

use crate::channel::stream_rng;
use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};

/// Converged dominant eigenpair.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

fn normalize(v: &mut Array1<f64>) -> f64 {
    let norm = v.dot(v).sqrt();
    if norm > 0.0 {
        *v /= norm;
    }
    norm
}

/// Power iteration on a symmetric positive semi-definite matrix.
///
/// Stops when `‖A u − λ u‖ ≤ tol · max(λ, tiny)`; returns `None` after `max_iter`
/// steps without convergence.
pub fn power_iteration(a: &Array2<f64>, tol: f64, max_iter: usize, seed: u64) -> Option<EigenPair> {
    let n = a.nrows();
    if n == 0 {
        return None;
    }
    let mut rng = stream_rng(seed, 0);
    let mut u = Array1::from_shape_simple_fn(n, || StandardNormal.sample(&mut rng));
    normalize(&mut u);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Some(EigenPair {
            value: 0.0,
            vector: u.to_vec(),
            iterations: 0,
        });
    }
    for it in 1..=max_iter {
        let mut w = a.dot(&u);
        let lambda = u.dot(&w);
        let residual = (&w - &(lambda * &u)).dot(&(&w - &(lambda * &u))).sqrt();
        if residual <= tol * lambda.abs().max(1e-300) {
            return Some(EigenPair {
                value: lambda,
                vector: u.to_vec(),
                iterations: it,
            });
        }
        if normalize(&mut w) == 0.0 {
            return None;
        }
        u = w;
    }
    None
}

/// All eigenpairs of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvalues are returned in descending order; column `j` of the matrix is the
/// eigenvector for value `j`.
pub fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let total: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]));
    let values = order.iter().map(|&i| m[[i, i]]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (col, &i) in order.iter().enumerate() {
        vectors.column_mut(col).assign(&v.column(i));
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(n: usize, rows: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = Array2::from_shape_simple_fn((rows, n), || rng.random_range(-1.0..1.0));
        q.t().dot(&q) / rows as f64
    }

    #[test]
    fn jacobi_matches_dense_oracle() {
        for seed in 0..10 {
            let a = random_psd(12, 30, seed);
            let (vals, vecs) = jacobi_eigen(&a);
            let dm = nalgebra::DMatrix::from_fn(12, 12, |i, j| a[[i, j]]);
            let mut want: Vec<f64> = dm.symmetric_eigen().eigenvalues.iter().copied().collect();
            want.sort_by(|x, y| y.total_cmp(x));
            for (g, w) in vals.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10);
            }
            for j in 0..12 {
                let v = vecs.column(j).to_owned();
                let r = a.dot(&v) - vals[j] * &v;
                assert!(r.dot(&r).sqrt() < 1e-9);
            }
        }
    }

    #[test]
    fn power_iteration_finds_the_top_pair() {
        let a = random_psd(20, 50, 3);
        let p = power_iteration(&a, 1e-10, 10_000, 1).unwrap();
        let (vals, _) = jacobi_eigen(&a);
        assert!((p.value - vals[0]).abs() < 1e-9 * vals[0]);
    }

    #[test]
    fn power_iteration_gives_up_on_a_tied_top_eigenvalue() {
        let mut a = Array2::<f64>::zeros((3, 3));
        a[[0, 0]] = 1.0;
        a[[1, 1]] = -1.0;
        // ±1 have equal magnitude: the iterate oscillates and never satisfies the residual test
        assert!(power_iteration(&a, 1e-10, 200, 0).is_none());
    }
}
