//! Seeded random instances: Gaussian loadings, signed permutations, Haar
//! orthogonal matrices. Shared by the oracle checks, the CLI and the tests.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::matrix::{dot, Matrix, Sign, SignedPermutation};

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, sd: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Uniform over all `k! 2^k` signed permutations.
pub fn random_signed_permutation<R: Rng + ?Sized>(rng: &mut R, k: usize) -> SignedPermutation {
    let mut perm: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let signs = (0..k)
        .map(|_| if rng.random::<bool>() { Sign::Plus } else { Sign::Minus })
        .collect();
    SignedPermutation::new(perm, signs).expect("shuffled identity is a bijection")
}

/// Haar-distributed orthogonal matrix (Gram-Schmidt on a Gaussian matrix).
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Matrix {
    let mut q = gaussian_matrix(rng, k, k, 1.0);
    for j in 0..k {
        for _ in 0..2 {
            for i in 0..j {
                let proj = dot(q.column(i), q.column(j));
                let (qi, qj) = q.column_pair_mut(i, j);
                for (x, y) in qj.iter_mut().zip(qi.iter()) {
                    *x -= proj * y;
                }
            }
        }
        let n = dot(q.column(j), q.column(j)).sqrt();
        for x in q.column_mut(j) {
            *x /= n;
        }
    }
    q
}
