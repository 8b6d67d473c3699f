//! Real symmetric embedding of Hermitian matrices.
//!
//! `H = A + iB` maps to `emb(H) = [[A, -B], [B, A]]`. For Hermitian `C`,
//! `tr(C H) = tr(emb(C) emb(H)) / 2`, and `H` is PSD iff `emb(H)` is.
//! Solvers work on an unrestricted real symmetric `Y` of size `2n`; any
//! feasible `Y` maps back to a feasible Hermitian matrix through
//! [`recover_hermitian`], which averages `Y` with its rotated copy
//! `J Y J^T` (`J = [[0, -I], [I, 0]]`). Every linear functional of the form
//! `tr(emb(C) Y)` is invariant under that rotation, so the recovered matrix
//! keeps the objective and constraint values of `Y`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::MatrixCoef;
use crate::C64;

pub fn embed_hermitian(h: &DMatrix<C64>) -> DMatrix<f64> {
    let n = h.nrows();
    let mut y = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let v = h[(i, j)];
            y[(i, j)] = v.re;
            y[(i + n, j + n)] = v.re;
            y[(i, j + n)] = -v.im;
            y[(i + n, j)] = v.im;
        }
    }
    y
}

pub fn recover_hermitian(y: &DMatrix<f64>) -> DMatrix<C64> {
    let n = y.nrows() / 2;
    DMatrix::from_fn(n, n, |i, j| {
        let re = 0.5 * (y[(i, j)] + y[(i + n, j + n)]);
        let im = 0.5 * (y[(i + n, j)] - y[(i, j + n)]);
        C64::new(re, im)
    })
}

/// Embedding of `v v^H` as `u u^T + w w^T`.
pub fn embed_outer(v: &DVector<C64>) -> (DVector<f64>, DVector<f64>) {
    let n = v.len();
    let u = DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im });
    let w = DVector::from_fn(2 * n, |i, _| if i < n { -v[i].im } else { v[i - n].re });
    (u, w)
}

/// Signed rank-one factors `(s, w)` with `emb(C_h) / 2 = sum s w w^T`,
/// where `C_h` is the Hermitian part of the coefficient.
pub fn half_embedding_factors(coef: &MatrixCoef, dim: usize) -> Vec<(f64, DVector<f64>)> {
    match coef {
        MatrixCoef::LowRank(terms) => {
            let mut out = Vec::with_capacity(2 * terms.len());
            for (d, v) in terms {
                if *d == 0.0 {
                    continue;
                }
                let scale = (d.abs() / 2.0).sqrt();
                let (u, w) = embed_outer(v);
                out.push((d.signum(), u * scale));
                out.push((d.signum(), w * scale));
            }
            out
        }
        MatrixCoef::Entries(triplets) => {
            // Sparse symmetric real entries of emb(C_h)/2.
            let mut entries: Vec<(usize, usize, f64)> = Vec::new();
            for &(i, j, v) in triplets {
                // C_h = (C + C^H)/2: entry v at (i,j) contributes v/2 at (i,j)
                // and conj(v)/2 at (j,i).
                for (r, c, val) in [(i, j, v * 0.5), (j, i, v.conj() * 0.5)] {
                    entries.push((r, c, 0.5 * val.re));
                    entries.push((r + dim, c + dim, 0.5 * val.re));
                    entries.push((r, c + dim, -0.5 * val.im));
                    entries.push((r + dim, c, 0.5 * val.im));
                }
            }
            let mut support: Vec<usize> = entries.iter().flat_map(|e| [e.0, e.1]).collect();
            support.sort_unstable();
            support.dedup();
            if support.is_empty() {
                return Vec::new();
            }
            let pos = |idx: usize| support.binary_search(&idx).unwrap();
            let s = support.len();
            let mut sub = DMatrix::<f64>::zeros(s, s);
            for (r, c, v) in entries {
                sub[(pos(r), pos(c))] += v;
            }
            let sub = (&sub + sub.transpose()) * 0.5;
            let eig = SymmetricEigen::new(sub);
            let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let mut out = Vec::new();
            for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam.abs() <= 1e-14 * max || lam == 0.0 {
                    continue;
                }
                let mut w = DVector::<f64>::zeros(2 * dim);
                for (local, &global) in support.iter().enumerate() {
                    w[global] = eig.eigenvectors[(local, k)] * lam.abs().sqrt();
                }
                out.push((lam.signum(), w));
            }
            out
        }
    }
}

/// Dense `emb(C_h) / 2`.
pub fn half_embedding_dense(coef: &MatrixCoef, dim: usize) -> DMatrix<f64> {
    embed_hermitian(&coef.hermitian_dense(dim)) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<C64> {
        let a = DMatrix::from_fn(n, n, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        (&a + a.adjoint()) * C64::new(0.5, 0.0)
    }

    #[test]
    fn trace_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let c = random_hermitian(&mut rng, 4);
            let h = random_hermitian(&mut rng, 4);
            let lhs = (&c * &h).trace().re;
            let rhs = 0.5 * (embed_hermitian(&c) * embed_hermitian(&h)).trace();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn psd_is_preserved_both_ways() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(5, 3, |_, _| C64::new(rng.gen::<f64>(), rng.gen::<f64>()));
        let h = &a * a.adjoint();
        let y = embed_hermitian(&h);
        let ev = SymmetricEigen::new(y.clone()).eigenvalues;
        assert!(ev.iter().all(|v| *v > -1e-12));
        // Spectrum of the embedding is the Hermitian spectrum, doubled.
        let mut he: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().cloned().collect();
        let mut ye: Vec<f64> = ev.iter().cloned().collect();
        he.sort_by(f64::total_cmp);
        ye.sort_by(f64::total_cmp);
        for (i, v) in he.iter().enumerate() {
            assert!((ye[2 * i] - v).abs() < 1e-10 && (ye[2 * i + 1] - v).abs() < 1e-10);
        }
        assert!((recover_hermitian(&y) - &h).norm() < 1e-14);
    }

    #[test]
    fn recovery_of_unstructured_psd_keeps_functionals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = DMatrix::from_fn(6, 6, |_, _| rng.gen::<f64>() - 0.5);
        let y = &b * b.transpose();
        let h = recover_hermitian(&y);
        let he = SymmetricEigen::new(h.clone()).eigenvalues;
        assert!(he.iter().all(|v| *v > -1e-12));
        let c = random_hermitian(&mut rng, 3);
        let lhs = (&c * &h).trace().re;
        let rhs = 0.5 * (embed_hermitian(&c) * &y).trace();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn factors_reproduce_half_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v = DVector::from_fn(4, |_, _| C64::new(rng.gen::<f64>(), rng.gen::<f64>()));
        let coefs = [
            MatrixCoef::outer(v.clone(), -1.5),
            MatrixCoef::diag_entry(2),
            MatrixCoef::Entries(vec![(0, 3, C64::new(0.3, -0.7)), (1, 1, C64::new(2.0, 0.0))]),
        ];
        for coef in &coefs {
            let dense = half_embedding_dense(coef, 4);
            let mut rebuilt = DMatrix::<f64>::zeros(8, 8);
            for (s, w) in half_embedding_factors(coef, 4) {
                rebuilt += &w * w.transpose() * s;
            }
            assert!((rebuilt - dense).norm() < 1e-12);
        }
    }
}
