//! Orthogonal Varimax rotation.
//!
//! Classical Kaiser scheme: cyclic sweeps over all column pairs, each pair
//! rotated by the closed-form angle that maximizes the pair's contribution to
//! the raw varimax criterion. Sweeps repeat until the relative improvement of
//! the criterion over a full sweep drops below the tolerance, then continue
//! while any pair angle is above [`POLISH_ANGLE`].
//!
//! An all-zero column contributes nothing to the pair sums, so its rotations
//! are the identity and need no special casing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Chain, LoadingsMatrix, Matrix};
use crate::parallel;

/// After the criterion test passes, sweeps continue until no pair angle
/// exceeds this, so that rotating a result again is a no-op to rounding.
pub const POLISH_ANGLE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarimaxConfig {
    pub max_iterations: usize,
    /// Relative criterion improvement per sweep below which iteration stops.
    pub tolerance: f64,
    /// Kaiser row normalization.
    pub normalize: bool,
}

impl Default for VarimaxConfig {
    fn default() -> Self {
        VarimaxConfig {
            max_iterations: 1000,
            tolerance: 1e-8,
            normalize: false,
        }
    }
}

impl VarimaxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("varimax max_iterations must be >= 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "varimax tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct VarimaxResult {
    /// `input * rotation`.
    pub rotated: LoadingsMatrix,
    pub rotation: Matrix,
    /// Completed sweeps.
    pub iterations: usize,
    pub criterion: f64,
    pub converged: bool,
}

/// Raw varimax objective `sum_j [ p * sum_i l_ij^4 - (sum_i l_ij^2)^2 ]`.
pub fn varimax_criterion(m: &Matrix) -> f64 {
    let p = m.rows() as f64;
    (0..m.cols())
        .map(|j| {
            let (s2, s4) = m.column(j).iter().fold((0.0, 0.0), |(s2, s4), &v| {
                let sq = v * v;
                (s2 + sq, s4 + sq * sq)
            });
            p * s4 - s2 * s2
        })
        .sum()
}

/// Angle maximizing the pair criterion for columns `x`, `y` under
/// `x' = c x + s y`, `y' = -s x + c y`. Lies in (-pi/4, pi/4].
fn pair_angle(x: &[f64], y: &[f64]) -> f64 {
    let p = x.len() as f64;
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let u = xi * xi - yi * yi;
        let v = 2.0 * xi * yi;
        a += u;
        b += v;
        c += u * u - v * v;
        d += 2.0 * u * v;
    }
    let num = p * d - 2.0 * a * b;
    let den = p * c - (a * a - b * b);
    num.atan2(den) / 4.0
}

fn rotate_pair(x: &mut [f64], y: &mut [f64], cos: f64, sin: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let (xv, yv) = (*xi, *yi);
        *xi = cos * xv + sin * yv;
        *yi = -sin * xv + cos * yv;
    }
}

pub fn varimax_rotate(m: &LoadingsMatrix, cfg: &VarimaxConfig) -> Result<VarimaxResult> {
    cfg.validate()?;
    let (p, k) = m.shape();
    if k == 1 {
        return Ok(VarimaxResult {
            rotated: m.clone(),
            rotation: Matrix::identity(1),
            iterations: 0,
            criterion: varimax_criterion(m),
            converged: true,
        });
    }

    let row_scale: Option<Vec<f64>> = cfg.normalize.then(|| {
        (0..p)
            .map(|i| {
                let h = (0..k).map(|j| m[(i, j)] * m[(i, j)]).sum::<f64>().sqrt();
                if h > 0.0 {
                    h
                } else {
                    1.0
                }
            })
            .collect()
    });
    let mut work = match &row_scale {
        Some(h) => Matrix::from_fn(p, k, |i, j| m[(i, j)] / h[i]),
        None => m.matrix().clone(),
    };
    let mut rotation = Matrix::identity(k);

    let mut criterion = varimax_criterion(&work);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        let mut largest_angle: f64 = 0.0;
        for a in 0..k {
            for b in a + 1..k {
                let theta = {
                    let (x, y) = (work.column(a), work.column(b));
                    pair_angle(x, y)
                };
                if theta == 0.0 {
                    continue;
                }
                largest_angle = largest_angle.max(theta.abs());
                let (sin, cos) = theta.sin_cos();
                let (x, y) = work.column_pair_mut(a, b);
                rotate_pair(x, y, cos, sin);
                let (ra, rb) = rotation.column_pair_mut(a, b);
                rotate_pair(ra, rb, cos, sin);
            }
        }
        iterations += 1;
        let next = varimax_criterion(&work);
        debug_assert!(
            next >= criterion - 1e-10 * criterion.abs().max(1.0),
            "varimax criterion decreased: {criterion} -> {next}"
        );
        let improvement = next - criterion;
        criterion = next;
        if improvement <= cfg.tolerance * criterion.abs() {
            converged = true;
        }
        if converged && largest_angle <= POLISH_ANGLE {
            break;
        }
    }

    let rotated = match &row_scale {
        Some(h) => Matrix::from_fn(p, k, |i, j| work[(i, j)] * h[i]),
        None => work,
    };
    let rotated = LoadingsMatrix::new(rotated)?;
    let criterion = if row_scale.is_some() {
        varimax_criterion(&rotated)
    } else {
        criterion
    };
    Ok(VarimaxResult {
        rotated,
        rotation,
        iterations,
        criterion,
        converged,
    })
}

/// Varimax-rotates every sample; order and residual variances are preserved.
pub fn orthogonalize_chain(c: &Chain, cfg: &VarimaxConfig) -> Result<Chain> {
    Ok(orthogonalize_chain_detailed(c, cfg)?.0)
}

/// Per-sample convergence bookkeeping from [`orthogonalize_chain_detailed`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalizeSummary {
    pub not_converged: Vec<usize>,
    pub max_iterations_used: usize,
}

pub fn orthogonalize_chain_detailed(c: &Chain, cfg: &VarimaxConfig) -> Result<(Chain, OrthogonalizeSummary)> {
    cfg.validate()?;
    let results = parallel::map_indexed(c.samples(), |t, s| varimax_rotate(s, cfg).map_err(|e| e.at_sample(t)));
    let mut samples = Vec::with_capacity(results.len());
    let mut summary = OrthogonalizeSummary::default();
    for (t, r) in results.into_iter().enumerate() {
        let r = r?;
        if !r.converged {
            summary.not_converged.push(t);
        }
        summary.max_iterations_used = summary.max_iterations_used.max(r.iterations);
        samples.push(r.rotated);
    }
    if !summary.not_converged.is_empty() {
        log::warn!(
            "varimax did not converge for {} of {} samples",
            summary.not_converged.len(),
            c.len()
        );
    }
    Ok((c.with_samples(samples), summary))
}
