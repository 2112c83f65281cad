//! Seeded random ensembles used by the search routines and test corpora.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{ComplexMatrix, C64};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` derived from `seed`; used to keep parallel
/// work deterministic regardless of scheduling.
pub fn stream(seed: u64, index: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Hermitian matrix with Gaussian entries (GUE up to scale).
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(n, n, |_, _| complex_gaussian(rng));
    g.hermitian_part()
}

/// Haar-distributed unit vector.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..n).map(|_| complex_gaussian(rng)).collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|z| z / norm).collect();
        }
    }
}

/// Haar-random unitary via Gram–Schmidt on a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<C64> = (0..n).map(|_| complex_gaussian(rng)).collect();
        for _ in 0..2 {
            for u in &cols {
                let ip: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= ip * y;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|z| z / norm).collect());
        }
    }
    ComplexMatrix::from_fn(n, n, |r, c| cols[c][r])
}

/// Random density matrix of the given rank (Ginibre ensemble `GG†/tr`).
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, n: usize, rank: usize) -> ComplexMatrix {
    let rank = rank.clamp(1, n);
    let g = ComplexMatrix::from_fn(n, rank, |_, _| complex_gaussian(rng));
    let mut rho = g.matmul(&g.adjoint()).expect("shapes agree");
    let t = rho.trace().re;
    for z in rho.data_mut() {
        *z /= t;
    }
    rho.hermitian_part()
}

/// `n×n` zero-trace Hermitian direction of unit Frobenius norm.
pub fn random_traceless_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let mut h = random_hermitian(rng, n);
    let shift = h.trace() / n as f64;
    for i in 0..n {
        h[(i, i)] -= shift;
    }
    let f = h.frobenius_norm();
    if f > 0.0 {
        h = h.scale_real(1.0 / f);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unitary_is_unitary() {
        let mut rng = seeded(1);
        let u = random_unitary(&mut rng, 5);
        let uu = u.adjoint().matmul(&u).unwrap();
        assert!(uu.max_abs_diff(&ComplexMatrix::identity(5)) < 1e-12);
    }

    #[test]
    fn density_is_normalized() {
        let mut rng = seeded(2);
        let rho = random_density(&mut rng, 4, 2);
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert!(rho.is_hermitian());
    }

    #[test]
    fn streams_are_reproducible() {
        let a: u64 = stream(7, 3).random();
        let b: u64 = stream(7, 3).random();
        let c: u64 = stream(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
