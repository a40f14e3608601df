//! Greedy vs. exact vs. brute-force matching on seeded synthetic instances.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{brute_force_match, exact_match_assignment, greedy_match, match_loss, MatchConfig, BRUTE_FORCE_MAX_K};
use crate::error::{Error, Result};
use crate::matrix::{apply_signed_permutation, LoadingsMatrix};
use crate::sim::{gaussian_matrix, random_signed_permutation};

/// A sample that is the pivot under a random signed permutation plus iid
/// Gaussian noise of standard deviation `noise`. Returns `(sample, pivot)`.
pub fn noisy_instance(rng: &mut ChaCha8Rng, p: usize, k: usize, noise: f64) -> Result<(LoadingsMatrix, LoadingsMatrix)> {
    let pivot = LoadingsMatrix::new(gaussian_matrix(rng, p, k, 1.0))?;
    let sp = random_signed_permutation(rng, k);
    let moved = apply_signed_permutation(&pivot, &sp)?;
    let jitter = gaussian_matrix(rng, p, k, noise);
    Ok((LoadingsMatrix::new(moved.add(&jitter)?)?, pivot))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckConfig {
    pub p: usize,
    pub k: usize,
    pub trials: usize,
    pub noise: f64,
    pub seed: u64,
    pub brute_force: bool,
    pub matching: MatchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub greedy_loss: f64,
    pub exact_loss: f64,
    pub brute_force_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingMedians {
    pub greedy_seconds: f64,
    pub exact_seconds: f64,
    pub brute_force_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub schema_version: u32,
    pub config: OracleCheckConfig,
    pub trials: Vec<TrialRecord>,
    /// Trials where the greedy loss equals the exact optimum.
    pub greedy_equals_exact: usize,
    /// Trials where greedy beat the "optimum" by more than rounding; must be 0.
    pub greedy_below_exact: usize,
    pub brute_force_equals_exact: Option<usize>,
    pub timing_medians: Option<TimingMedians>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Runs the matchers on `cfg.trials` instances. Timings are recorded only
/// when `with_timing` is set, so the report can be made byte-reproducible.
pub fn oracle_check(cfg: &OracleCheckConfig, with_timing: bool) -> Result<OracleReport> {
    if cfg.brute_force && cfg.k > BRUTE_FORCE_MAX_K {
        return Err(Error::BruteForceCap {
            k: cfg.k,
            max: BRUTE_FORCE_MAX_K,
        });
    }
    if cfg.k == 0 || cfg.p == 0 {
        return Err(Error::InvalidInput("p and k must be positive".into()));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::InvalidInput(format!("noise must be >= 0, got {}", cfg.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trials = Vec::with_capacity(cfg.trials);
    let (mut tg, mut te, mut tb) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..cfg.trials {
        let (a, p) = noisy_instance(&mut rng, cfg.p, cfg.k, cfg.noise)?;
        let start = Instant::now();
        let g = greedy_match(&a, &p, &cfg.matching)?;
        tg.push(start.elapsed().as_secs_f64());
        let start = Instant::now();
        let e = exact_match_assignment(&a, &p)?;
        te.push(start.elapsed().as_secs_f64());
        let brute_force_loss = if cfg.brute_force {
            let start = Instant::now();
            let b = brute_force_match(&a, &p)?;
            tb.push(start.elapsed().as_secs_f64());
            Some(match_loss(&a, &b, &p)?)
        } else {
            None
        };
        trials.push(TrialRecord {
            greedy_loss: match_loss(&a, &g, &p)?,
            exact_loss: match_loss(&a, &e, &p)?,
            brute_force_loss,
        });
    }
    let greedy_equals_exact = trials.iter().filter(|t| t.greedy_loss == t.exact_loss).count();
    let greedy_below_exact = trials
        .iter()
        .filter(|t| t.greedy_loss < t.exact_loss * (1.0 - 1e-12))
        .count();
    let brute_force_equals_exact = cfg
        .brute_force
        .then(|| trials.iter().filter(|t| t.brute_force_loss == Some(t.exact_loss)).count());
    let timing_medians = with_timing.then(|| TimingMedians {
        greedy_seconds: median(tg),
        exact_seconds: median(te),
        brute_force_seconds: cfg.brute_force.then(|| median(tb)),
    });
    Ok(OracleReport {
        schema_version: crate::report::REPORT_SCHEMA_VERSION,
        config: *cfg,
        trials,
        greedy_equals_exact,
        greedy_below_exact,
        brute_force_equals_exact,
        timing_medians,
    })
}
