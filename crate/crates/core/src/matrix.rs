//! Dense column-major matrices, loadings samples, chains and signed
//! permutations.
//!
//! Everything here is an immutable value once built. Operations are pure and
//! can be shared freely between worker threads.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix in column-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from row slices; handy for literals.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != ncols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i].as_ref()[j]))
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Mutable views of two distinct columns.
    pub fn column_pair_mut(&mut self, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
        assert!(a != b && a < self.cols && b < self.cols);
        let r = self.rows;
        if a < b {
            let (lo, hi) = self.data.split_at_mut(b * r);
            (&mut lo[a * r..(a + 1) * r], &mut hi[..r])
        } else {
            let (lo, hi) = self.data.split_at_mut(a * r);
            let (b_col, a_col) = (&mut lo[b * r..(b + 1) * r], &mut hi[..r]);
            (a_col, b_col)
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            let dst = j * self.rows;
            for l in 0..self.cols {
                let w = rhs[(l, j)];
                if w == 0.0 {
                    continue;
                }
                let src = self.column(l);
                for (o, &s) in out.data[dst..dst + self.rows].iter_mut().zip(src) {
                    *o += s * w;
                }
            }
        }
        Ok(out)
    }

    /// `self * self^T`.
    pub fn outer_gram(&self) -> Matrix {
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for l in 0..self.cols {
            let c = self.column(l);
            for j in 0..n {
                let w = c[j];
                if w == 0.0 {
                    continue;
                }
                let dst = &mut out.data[j * n..(j + 1) * n];
                for (o, &s) in dst.iter_mut().zip(c) {
                    *o += s * w;
                }
            }
        }
        out
    }

    /// `self^T * self`.
    pub fn inner_gram(&self) -> Matrix {
        let k = self.cols;
        let mut out = Matrix::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let v = dot(self.column(a), self.column(b));
                out[(a, b)] = v;
                out[(b, a)] = v;
            }
        }
        out
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, |a, b| a + b)
    }

    fn zip_with(&self, rhs: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::Dimension(format!(
                "shapes {:?} and {:?} differ",
                self.shape(),
                rhs.shape()
            )));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|idx| (idx % self.rows.max(1), idx / self.rows.max(1)))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Square root of the sum of squared entries.
pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `||m1 m1^T - m2 m2^T||_F / ||m2 m2^T||_F`, or the absolute difference when
/// the reference is zero.
pub fn relative_gram_difference(m1: &Matrix, m2: &Matrix) -> Result<f64> {
    let g1 = m1.outer_gram();
    let g2 = m2.outer_gram();
    let diff = g1.sub(&g2)?.frobenius_norm();
    let scale = g2.frobenius_norm();
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// One p x k sample of factor loadings: at least one row and column, all
/// entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingsMatrix(Matrix);

impl LoadingsMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows == 0 || m.cols == 0 {
            return Err(Error::Dimension(format!(
                "loadings must be at least 1x1, got {}x{}",
                m.rows, m.cols
            )));
        }
        if let Some((row, col)) = m.first_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        Ok(LoadingsMatrix(m))
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(Matrix::from_col_major(rows, cols, data)?)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// L2 norm of every column.
    pub fn column_l2_norms(&self) -> Vec<f64> {
        (0..self.0.cols).map(|j| norm2(self.0.column(j))).collect()
    }
}

impl Deref for LoadingsMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// Column sign in a signed permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;

    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(format!("sign must be +1 or -1, got {other}")),
        }
    }
}

/// Column permutation with per-column signs.
///
/// Output column `j` is `signs[j]` times input column `perm[j]`; this is
/// right-multiplication by the signed permutation matrix `Q S`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignedPermutation {
    perm: Vec<usize>,
    signs: Vec<Sign>,
}

impl SignedPermutation {
    pub fn new(perm: Vec<usize>, signs: Vec<Sign>) -> Result<Self> {
        let k = perm.len();
        if signs.len() != k {
            return Err(Error::Dimension(format!(
                "{} signs for a permutation of length {k}",
                signs.len()
            )));
        }
        let mut seen = vec![false; k];
        for &p in &perm {
            if p >= k || seen[p] {
                return Err(Error::InvalidInput(format!("{perm:?} is not a bijection on 0..{k}")));
            }
            seen[p] = true;
        }
        Ok(SignedPermutation { perm, signs })
    }

    pub fn identity(k: usize) -> Self {
        SignedPermutation {
            perm: (0..k).collect(),
            signs: vec![Sign::Plus; k],
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn signs(&self) -> &[Sign] {
        &self.signs
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(j, &p)| j == p) && self.signs.iter().all(|&s| s == Sign::Plus)
    }

    /// The signed permutation undoing `self`.
    pub fn inverse(&self) -> SignedPermutation {
        let k = self.perm.len();
        let mut perm = vec![0; k];
        for (j, &p) in self.perm.iter().enumerate() {
            perm[p] = j;
        }
        let signs = perm.iter().map(|&src| self.signs[src]).collect();
        SignedPermutation { perm, signs }
    }

    /// `apply(m, first.then(second)) == apply(apply(m, first), second)`.
    pub fn compose(first: &SignedPermutation, second: &SignedPermutation) -> Result<SignedPermutation> {
        if first.len() != second.len() {
            return Err(Error::Dimension(format!(
                "cannot compose signed permutations of length {} and {}",
                first.len(),
                second.len()
            )));
        }
        let perm = second.perm.iter().map(|&p| first.perm[p]).collect();
        let signs = second
            .perm
            .iter()
            .zip(&second.signs)
            .map(|(&p, &s)| s * first.signs[p])
            .collect();
        Ok(SignedPermutation { perm, signs })
    }

    /// Dense k x k matrix `P` with `apply(m, self) == m * P`.
    pub fn to_matrix(&self) -> Matrix {
        let k = self.len();
        let mut m = Matrix::zeros(k, k);
        for (j, (&p, &s)) in self.perm.iter().zip(&self.signs).enumerate() {
            m[(p, j)] = s.value();
        }
        m
    }
}

/// Reorders and re-signs the columns of `m`.
pub fn apply_signed_permutation(m: &LoadingsMatrix, sp: &SignedPermutation) -> Result<LoadingsMatrix> {
    if sp.len() != m.cols() {
        return Err(Error::Dimension(format!(
            "signed permutation of length {} applied to {} columns",
            sp.len(),
            m.cols()
        )));
    }
    let mut data = Vec::with_capacity(m.rows() * m.cols());
    for (&src, &sign) in sp.perm.iter().zip(&sp.signs) {
        let col = m.column(src);
        match sign {
            Sign::Plus => data.extend_from_slice(col),
            Sign::Minus => data.extend(col.iter().map(|v| -v)),
        }
    }
    Ok(LoadingsMatrix(Matrix {
        rows: m.rows(),
        cols: m.cols(),
        data,
    }))
}

/// Ordered posterior samples of loadings, optionally paired with the residual
/// variances (diagonal of Sigma) drawn alongside them.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    samples: Vec<LoadingsMatrix>,
    residual_variances: Option<Vec<Vec<f64>>>,
}

impl Chain {
    pub fn new(samples: Vec<LoadingsMatrix>, residual_variances: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("a chain needs at least one sample".into()))?;
        let shape = first.shape();
        if let Some(t) = samples.iter().position(|s| s.shape() != shape) {
            return Err(Error::Dimension(format!(
                "sample {t} is {:?}, expected {shape:?}",
                samples[t].shape()
            )));
        }
        if let Some(rv) = &residual_variances {
            if rv.len() != samples.len() {
                return Err(Error::Dimension(format!(
                    "{} residual-variance vectors for {} samples",
                    rv.len(),
                    samples.len()
                )));
            }
            for (t, v) in rv.iter().enumerate() {
                if v.len() != shape.0 {
                    return Err(Error::Dimension(format!(
                        "residual variances of sample {t} have length {}, expected {}",
                        v.len(),
                        shape.0
                    )));
                }
                if let Some(j) = v.iter().position(|&x| !(x.is_finite() && x > 0.0)) {
                    return Err(Error::InvalidInput(format!(
                        "residual variance {j} of sample {t} is not strictly positive: {}",
                        v[j]
                    )));
                }
            }
        }
        Ok(Chain {
            samples,
            residual_variances,
        })
    }

    pub fn samples(&self) -> &[LoadingsMatrix] {
        &self.samples
    }

    pub fn residual_variances(&self) -> Option<&[Vec<f64>]> {
        self.residual_variances.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of observed variables.
    pub fn p(&self) -> usize {
        self.samples[0].rows()
    }

    /// Latent dimension.
    pub fn k(&self) -> usize {
        self.samples[0].cols()
    }

    /// Same residual variances, new loadings; used by the per-sample
    /// transforms, which never touch Sigma.
    pub(crate) fn with_samples(&self, samples: Vec<LoadingsMatrix>) -> Chain {
        debug_assert_eq!(samples.len(), self.samples.len());
        Chain {
            samples,
            residual_variances: self.residual_variances.clone(),
        }
    }

    /// Trace of entry `(row, col)` across the chain.
    pub fn entry_series(&self, row: usize, col: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[(row, col)]).collect()
    }

    /// Element-wise posterior mean of the loadings.
    pub fn mean(&self) -> Matrix {
        let (p, k) = (self.p(), self.k());
        let mut acc = vec![0.0; p * k];
        for s in &self.samples {
            for (a, v) in acc.iter_mut().zip(s.as_slice()) {
                *a += v;
            }
        }
        let t = self.len() as f64;
        Matrix::from_col_major(p, k, acc.into_iter().map(|v| v / t).collect()).expect("shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_loadings(rng: &mut ChaCha8Rng, p: usize, k: usize) -> LoadingsMatrix {
        LoadingsMatrix::new(Matrix::from_fn(p, k, |_, _| rng.random_range(-2.0..2.0))).unwrap()
    }

    fn random_sp(rng: &mut ChaCha8Rng, k: usize) -> SignedPermutation {
        let mut perm: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let signs = (0..k).map(|_| if rng.random() { Sign::Plus } else { Sign::Minus }).collect();
        SignedPermutation::new(perm, signs).unwrap()
    }

    #[test]
    fn frobenius_small_cases() {
        assert_eq!(Matrix::zeros(2, 2).frobenius_norm(), 0.0);
        let m = Matrix::from_rows(&[[3.0, 0.0], [0.0, 4.0]]).unwrap();
        assert_eq!(m.frobenius_norm(), 5.0);
    }

    #[test]
    fn frobenius_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_loadings(&mut rng, 5, 3);
        let mut acc = 0.0;
        for i in 0..5 {
            for j in 0..3 {
                acc += m[(i, j)] * m[(i, j)];
            }
        }
        assert!((m.frobenius_norm() - acc.sqrt()).abs() <= 1e-14 * acc.sqrt());
    }

    #[test]
    fn column_norms() {
        let id = LoadingsMatrix::new(Matrix::identity(3)).unwrap();
        assert_eq!(id.column_l2_norms(), vec![1.0, 1.0, 1.0]);
        let m = LoadingsMatrix::from_rows(&[[1.0, 2.0], [0.0, 2.0]]).unwrap();
        let n = m.column_l2_norms();
        assert_eq!(n[0], 1.0);
        assert!((n[1] - 2.0 * 2f64.sqrt()).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_loadings(&mut rng, 7, 4);
        for (j, n) in r.column_l2_norms().into_iter().enumerate() {
            let slice = Matrix::from_col_major(7, 1, r.column(j).to_vec()).unwrap();
            assert_eq!(n, slice.frobenius_norm());
        }
    }

    #[test]
    fn loadings_reject_bad_input() {
        assert!(LoadingsMatrix::new(Matrix::zeros(0, 3)).is_err());
        let err = LoadingsMatrix::from_rows(&[[1.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn apply_hand_example() {
        let m = LoadingsMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(apply_signed_permutation(&m, &SignedPermutation::identity(2)).unwrap(), m);
        let sp = SignedPermutation::new(vec![1, 0], vec![Sign::Minus, Sign::Plus]).unwrap();
        let out = apply_signed_permutation(&m, &sp).unwrap();
        assert_eq!(out, LoadingsMatrix::from_rows(&[[-2.0, 1.0], [-4.0, 3.0]]).unwrap());
        assert!(apply_signed_permutation(&m, &SignedPermutation::identity(3)).is_err());
    }

    #[test]
    fn apply_equals_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_loadings(&mut rng, 6, 4);
        let sp = random_sp(&mut rng, 4);
        let direct = apply_signed_permutation(&m, &sp).unwrap();
        let product = m.matmul(&sp.to_matrix()).unwrap();
        assert_eq!(direct.matrix(), &product);
    }

    #[test]
    fn compose_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_sp(&mut rng, 5);
        let id = SignedPermutation::identity(5);
        assert_eq!(SignedPermutation::compose(&id, &x).unwrap(), x);
        assert_eq!(SignedPermutation::compose(&x, &id).unwrap(), x);
        assert!(SignedPermutation::compose(&x, &x.inverse()).unwrap().is_identity());
        assert!(SignedPermutation::compose(&x.inverse(), &x).unwrap().is_identity());
        assert!(SignedPermutation::compose(&x, &SignedPermutation::identity(4)).is_err());
    }

    #[test]
    fn compose_matches_sequential_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let m = random_loadings(&mut rng, 5, 4);
            let a = random_sp(&mut rng, 4);
            let b = random_sp(&mut rng, 4);
            let seq = apply_signed_permutation(&apply_signed_permutation(&m, &a).unwrap(), &b).unwrap();
            let composed = apply_signed_permutation(&m, &SignedPermutation::compose(&a, &b).unwrap()).unwrap();
            assert_eq!(seq, composed);
        }
    }

    #[test]
    fn signed_permutation_validation() {
        assert!(SignedPermutation::new(vec![0, 0], vec![Sign::Plus; 2]).is_err());
        assert!(SignedPermutation::new(vec![0, 2], vec![Sign::Plus; 2]).is_err());
        assert!(SignedPermutation::new(vec![1, 0], vec![Sign::Plus]).is_err());
    }

    #[test]
    fn chain_validation() {
        let a = LoadingsMatrix::new(Matrix::identity(3)).unwrap();
        let b = LoadingsMatrix::new(Matrix::zeros(3, 2).add(&Matrix::from_fn(3, 2, |_, _| 1.0)).unwrap()).unwrap();
        assert!(Chain::new(vec![], None).is_err());
        assert!(Chain::new(vec![a.clone(), b], None).is_err());
        assert!(Chain::new(vec![a.clone()], Some(vec![vec![1.0, 1.0, 0.0]])).is_err());
        assert!(Chain::new(vec![a.clone()], Some(vec![vec![1.0, 1.0]])).is_err());
        assert!(Chain::new(vec![a.clone(), a], Some(vec![vec![1.0; 3]])).is_err());
    }
}
