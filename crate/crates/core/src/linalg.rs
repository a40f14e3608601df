//! Small dense kernels: one-sided Jacobi singular values and Cholesky.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Singular values of a tall matrix (`rows >= cols`), nonincreasing.
///
/// One-sided (Hestenes) Jacobi: columns are rotated pairwise until mutually
/// orthogonal, after which the singular values are the column norms. Unlike
/// the Gram-matrix route this keeps small singular values accurate relative
/// to the largest, which the rank test in the condition number depends on.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    let (p, k) = m.shape();
    if p < k {
        return Err(Error::InvalidInput(format!(
            "singular values need rows >= cols, got {p}x{k}"
        )));
    }
    let mut a = m.clone();
    const MAX_SWEEPS: usize = 80;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..k {
            for j in i + 1..k {
                let alpha = dot(a.column(i), a.column(i));
                let beta = dot(a.column(j), a.column(j));
                let gamma = dot(a.column(i), a.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (ci, cj) = a.column_pair_mut(i, j);
                for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
                    let (xv, yv) = (*x, *y);
                    *x = c * xv - s * yv;
                    *y = s * xv + c * yv;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..k).map(|j| dot(a.column(j), a.column(j)).sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Dimension(format!("Cholesky of a {}x{} matrix", n, a.cols())));
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for m in 0..j {
                d -= l[(j, m)] * l[(j, m)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Numeric(format!(
                    "matrix is not positive definite (pivot {j} = {d:e})"
                )));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut v = a[(i, j)];
                for m in 0..j {
                    v -= l[(i, m)] * l[(j, m)];
                }
                l[(i, j)] = v / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let n = self.l.rows();
        for i in 0..n {
            let mut v = b[i];
            for m in 0..i {
                v -= self.l[(i, m)] * b[m];
            }
            b[i] = v / self.l[(i, i)];
        }
    }

    /// Solves `L^T x = y` in place.
    pub fn backward(&self, b: &mut [f64]) {
        let n = self.l.rows();
        for i in (0..n).rev() {
            let mut v = b[i];
            for m in i + 1..n {
                v -= self.l[(m, i)] * b[m];
            }
            b[i] = v / self.l[(i, i)];
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        assert_eq!(singular_values(&Matrix::identity(3)).unwrap(), vec![1.0, 1.0, 1.0]);
        let m = Matrix::from_rows(&[[3.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert_eq!(singular_values(&m).unwrap(), vec![3.0, 1.0]);
        assert!(singular_values(&m.transpose()).is_err());
    }

    #[test]
    fn two_column_closed_form() {
        // Squares of the singular values are the roots of the characteristic
        // polynomial of M^T M.
        let m = Matrix::from_rows(&[[0.3, -1.2], [2.0, 0.7], [-0.4, 0.1], [1.1, 1.9]]).unwrap();
        let g = m.inner_gram();
        let (a, b, d) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
        let tr = a + d;
        let det = a * d - b * b;
        let disc = (tr * tr / 4.0 - det).sqrt();
        let expect = [tr / 2.0 + disc, tr / 2.0 - disc];
        let sv = singular_values(&m).unwrap();
        for (s, e) in sv.iter().zip(expect) {
            assert!((s * s - e).abs() <= 1e-9 * e);
        }
    }

    #[test]
    fn duplicated_column_is_numerically_singular() {
        let m = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [-0.5, -0.5]]).unwrap();
        let sv = singular_values(&m).unwrap();
        assert!(sv[1] <= 1e-12 * sv[0], "{sv:?}");
    }

    #[test]
    fn cholesky_solve() {
        let a = Matrix::from_rows(&[[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]]).unwrap();
        let ch = Cholesky::new(&a).unwrap();
        let llt = ch.factor().matmul(&ch.factor().transpose()).unwrap();
        assert!(llt.sub(&a).unwrap().max_abs() < 1e-14);
        let mut x = vec![1.0, -2.0, 0.5];
        ch.solve(&mut x);
        let back = a.matmul(&Matrix::from_col_major(3, 1, x).unwrap()).unwrap();
        for (got, want) in back.as_slice().iter().zip([1.0, -2.0, 0.5]) {
            assert!((got - want).abs() < 1e-13);
        }
        let not_pd = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(Cholesky::new(&not_pd), Err(Error::Numeric(_))));
    }
}
