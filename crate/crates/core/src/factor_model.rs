//! Gaussian factor model `x_i = L eta_i + e_i`, `eta_i ~ N_k(0, I)`,
//! `e_i ~ N(0, diag(sigma^2))`: synthetic data and a conjugate blocked Gibbs
//! sampler that leaves the loadings unconstrained, so its output drifts
//! across rotations, labels and signs.
//!
//! All randomness comes from a `ChaCha8Rng` seeded with `seed_from_u64`. The
//! draws happen in a fixed sequential order, so a seed determines every bit of
//! the output regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::matrix::{Chain, LoadingsMatrix, Matrix};
use crate::sim::gaussian_matrix;

/// `k <= (p - 1) / 2`, the condition under which Sigma is identifiable.
pub fn validate_identifiability(p: usize, k: usize) -> bool {
    2 * k < p
}

fn check_dimensions(p: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("latent dimension k must be at least 1".into()));
    }
    if !validate_identifiability(p, k) {
        return Err(Error::InvalidInput(format!(
            "k = {k} is too large for p = {p}: need k <= (p-1)/2 = {}",
            p.saturating_sub(1) as f64 / 2.0
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Every loading iid N(0, 1).
    Independent,
    /// Variables split into k contiguous blocks, each loading mainly on one factor.
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub scenario: Scenario,
    pub seed: u64,
    /// Standard deviation of the off-block loadings in the sparse scenario.
    pub off_block_sd: f64,
}

impl GeneratorConfig {
    pub fn new(n: usize, p: usize, k: usize, scenario: Scenario, seed: u64) -> Self {
        GeneratorConfig {
            n,
            p,
            k,
            scenario,
            seed,
            off_block_sd: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be at least 1".into()));
        }
        check_dimensions(self.p, self.k)?;
        if !(self.off_block_sd >= 0.0 && self.off_block_sd.is_finite()) {
            return Err(Error::InvalidInput(format!("off_block_sd must be >= 0, got {}", self.off_block_sd)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    /// n x p observations.
    pub data: Matrix,
    pub true_loadings: LoadingsMatrix,
    pub true_residual_variances: Vec<f64>,
    /// n x k latent factors.
    pub true_factors: Matrix,
}

impl SyntheticDataset {
    /// `L L^T + diag(sigma^2)`.
    pub fn population_covariance(&self) -> Matrix {
        let mut c = self.true_loadings.outer_gram();
        for (j, s) in self.true_residual_variances.iter().enumerate() {
            c[(j, j)] += s;
        }
        c
    }
}

/// Sizes of the k contiguous variable blocks: `ceil(p/k)` for the first
/// `p mod k` blocks, `floor(p/k)` for the rest.
pub fn block_sizes(p: usize, k: usize) -> Vec<usize> {
    (0..k).map(|b| p / k + usize::from(b < p % k)).collect()
}

fn inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Numeric(format!("gamma({shape}, rate {rate}): {e}")))?
        .sample(rng);
    let v = 1.0 / g;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Numeric(format!(
            "inverse-gamma({shape}, {rate}) draw is not a positive finite number: {v}"
        )))
    }
}

pub fn generate(cfg: &GeneratorConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (p, k) = (cfg.p, cfg.k);
    let loadings = match cfg.scenario {
        Scenario::Independent => gaussian_matrix(&mut rng, p, k, 1.0),
        Scenario::Sparse => {
            let mut block_of = Vec::with_capacity(p);
            for (b, size) in block_sizes(p, k).into_iter().enumerate() {
                block_of.extend(std::iter::repeat_n(b, size));
            }
            Matrix::from_fn(p, k, |i, j| {
                let z: f64 = rng.sample(StandardNormal);
                if block_of[i] == j {
                    z
                } else {
                    cfg.off_block_sd * z
                }
            })
        }
    };
    complete_dataset(&mut rng, cfg.n, LoadingsMatrix::new(loadings)?)
}

/// Draws Sigma (InvGamma(1/2, 1/2) per variable), the factors and the noise
/// for given loadings, in that order.
fn complete_dataset(rng: &mut ChaCha8Rng, n: usize, loadings: LoadingsMatrix) -> Result<SyntheticDataset> {
    let (p, k) = loadings.shape();
    let residual_variances = (0..p)
        .map(|_| inverse_gamma(rng, 0.5, 0.5))
        .collect::<Result<Vec<_>>>()?;
    let mut factors = Matrix::zeros(n, k);
    for i in 0..n {
        for l in 0..k {
            factors[(i, l)] = rng.sample(StandardNormal);
        }
    }
    let mut data = factors.matmul(&loadings.transpose())?;
    for i in 0..n {
        for (j, s) in residual_variances.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            data[(i, j)] += s.sqrt() * z;
        }
    }
    Ok(SyntheticDataset {
        data,
        true_loadings: loadings,
        true_residual_variances: residual_variances,
        true_factors: factors,
    })
}

pub fn generate_independent(cfg: &GeneratorConfig) -> Result<SyntheticDataset> {
    if cfg.scenario != Scenario::Independent {
        return Err(Error::InvalidInput("generate_independent needs the independent scenario".into()));
    }
    generate(cfg)
}

pub fn generate_sparse(cfg: &GeneratorConfig) -> Result<SyntheticDataset> {
    if cfg.scenario != Scenario::Sparse {
        return Err(Error::InvalidInput("generate_sparse needs the sparse scenario".into()));
    }
    generate(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Variance of the iid normal prior on each loading.
    pub prior_loading_variance: f64,
    /// Inverse-gamma shape for each residual variance.
    pub prior_residual_shape: f64,
    /// Inverse-gamma rate, density proportional to `x^(-a-1) exp(-b/x)`.
    pub prior_residual_rate: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 11_000,
            burn_in: 1_000,
            prior_loading_variance: 1.0,
            prior_residual_shape: 0.5,
            prior_residual_rate: 0.5,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidInput(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        for (name, v) in [
            ("prior_loading_variance", self.prior_loading_variance),
            ("prior_residual_shape", self.prior_residual_shape),
            ("prior_residual_rate", self.prior_residual_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Samples retained after burn-in.
    pub fn kept(&self) -> usize {
        self.iterations - self.burn_in
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    /// p x k.
    pub loadings: Matrix,
    /// n x k.
    pub factors: Matrix,
    pub residual_variances: Vec<f64>,
}

/// Subtracts the column means; returns the centered copy and the means.
pub fn center_columns(x: &Matrix) -> (Matrix, Vec<f64>) {
    let (n, p) = x.shape();
    let means: Vec<f64> = (0..p).map(|j| x.column(j).iter().sum::<f64>() / n as f64).collect();
    let centered = Matrix::from_fn(n, p, |i, j| x[(i, j)] - means[j]);
    (centered, means)
}

/// `eta_i ~ N(V L^T S^-1 x_i, V)` with `V = (I + L^T S^-1 L)^-1`, for every row
/// of `x` (n x p).
pub fn draw_factors<R: Rng + ?Sized>(x: &Matrix, loadings: &Matrix, residual_variances: &[f64], rng: &mut R) -> Result<Matrix> {
    let (n, _) = x.shape();
    let (p, k) = loadings.shape();
    let weighted = Matrix::from_fn(p, k, |j, l| loadings[(j, l)] / residual_variances[j]);
    let mut precision = loadings.transpose().matmul(&weighted)?;
    for l in 0..k {
        precision[(l, l)] += 1.0;
    }
    let chol = Cholesky::new(&precision).map_err(|e| Error::Numeric(format!("factor posterior precision: {e}")))?;
    let projected = x.matmul(&weighted)?;
    let mut factors = Matrix::zeros(n, k);
    let mut mean = vec![0.0; k];
    let mut noise = vec![0.0; k];
    for i in 0..n {
        for l in 0..k {
            mean[l] = projected[(i, l)];
            noise[l] = rng.sample(StandardNormal);
        }
        chol.solve(&mut mean);
        chol.backward(&mut noise);
        for l in 0..k {
            factors[(i, l)] = mean[l] + noise[l];
        }
    }
    Ok(factors)
}

/// Row-wise conjugate update of the loadings given the factors.
pub fn draw_loadings<R: Rng + ?Sized>(
    x: &Matrix,
    factors: &Matrix,
    residual_variances: &[f64],
    prior_loading_variance: f64,
    rng: &mut R,
) -> Result<Matrix> {
    let p = x.cols();
    let k = factors.cols();
    let gram = factors.inner_gram();
    let mut loadings = Matrix::zeros(p, k);
    let mut row = vec![0.0; k];
    let mut noise = vec![0.0; k];
    for j in 0..p {
        let s2 = residual_variances[j];
        let mut precision = gram.scale(1.0 / s2);
        for l in 0..k {
            precision[(l, l)] += 1.0 / prior_loading_variance;
        }
        let chol = Cholesky::new(&precision)
            .map_err(|e| Error::Numeric(format!("loading row {j} posterior precision: {e}")))?;
        let xj = x.column(j);
        for l in 0..k {
            row[l] = crate::matrix::dot(factors.column(l), xj) / s2;
            noise[l] = rng.sample(StandardNormal);
        }
        chol.solve(&mut row);
        chol.backward(&mut noise);
        for l in 0..k {
            loadings[(j, l)] = row[l] + noise[l];
        }
    }
    Ok(loadings)
}

/// `sigma_j^2 ~ InvGamma(a + n/2, b + RSS_j / 2)`.
pub fn draw_residual_variances<R: Rng + ?Sized>(
    x: &Matrix,
    factors: &Matrix,
    loadings: &Matrix,
    shape: f64,
    rate: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    let fitted = factors.matmul(&loadings.transpose())?;
    (0..p)
        .map(|j| {
            let rss: f64 = x.column(j).iter().zip(fitted.column(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            inverse_gamma(rng, shape + n as f64 / 2.0, rate + rss / 2.0)
        })
        .collect()
}

/// Blocked Gibbs sampler; returns the post-burn-in loadings and residual
/// variances. Columns of `x` are centered first.
pub fn gibbs_sample(x: &Matrix, cfg: &SamplerConfig, k: usize) -> Result<Chain> {
    cfg.validate()?;
    let (n, p) = x.shape();
    if n == 0 {
        return Err(Error::InvalidInput("data matrix has no rows".into()));
    }
    check_dimensions(p, k)?;
    if let Some(idx) = x.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: idx % n,
            col: idx / n,
        });
    }
    let (x, _) = center_columns(x);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = GibbsState {
        loadings: gaussian_matrix(&mut rng, p, k, 1.0),
        factors: Matrix::zeros(n, k),
        residual_variances: vec![1.0; p],
    };

    let mut samples = Vec::with_capacity(cfg.kept());
    let mut variances = Vec::with_capacity(cfg.kept());
    for it in 0..cfg.iterations {
        let step = |state: &mut GibbsState, rng: &mut ChaCha8Rng| -> Result<()> {
            state.factors = draw_factors(&x, &state.loadings, &state.residual_variances, rng)?;
            state.loadings = draw_loadings(&x, &state.factors, &state.residual_variances, cfg.prior_loading_variance, rng)?;
            state.residual_variances = draw_residual_variances(
                &x,
                &state.factors,
                &state.loadings,
                cfg.prior_residual_shape,
                cfg.prior_residual_rate,
                rng,
            )?;
            Ok(())
        };
        step(&mut state, &mut rng).map_err(|e| Error::Numeric(format!("Gibbs iteration {it}: {e}")))?;
        if it >= cfg.burn_in {
            samples.push(LoadingsMatrix::new(state.loadings.clone())?);
            variances.push(state.residual_variances.clone());
        }
    }
    Chain::new(samples, Some(variances))
}
