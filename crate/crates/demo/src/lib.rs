//! Browser demo: three operations over the matchalign library, each taking
//! plain numbers and returning a JSON string for the page to draw.

use matchalign::align::{exact_match_assignment, greedy_match, match_align, match_loss, AlignConfig, MatchConfig};
use matchalign::diagnostics::{covariance_discrepancy, mean_ess_ratio, sign_shares};
use matchalign::factor_model::{generate, gibbs_sample, GeneratorConfig, SamplerConfig, Scenario};
use matchalign::oracle::noisy_instance;
use matchalign::report::SignedPermutationRecord;
use matchalign::sim::gaussian_matrix;
use matchalign::varimax::{varimax_criterion, varimax_rotate, VarimaxConfig};
use matchalign::{LoadingsMatrix, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Traces {
    /// 1-based entry shown.
    pub entry: (usize, usize),
    pub raw: Vec<f64>,
    pub aligned: Vec<f64>,
    pub raw_positive_share: f64,
    pub aligned_positive_share: f64,
    pub covariance_discrepancy_raw: f64,
    pub covariance_discrepancy_aligned: f64,
    pub mean_ess_ratio_raw: f64,
    pub mean_ess_ratio_aligned: f64,
    pub pivot: usize,
}

/// Simulates sparse data, runs the sampler and aligns the chain. The entry
/// shown is the raw entry whose sign is most evenly split.
pub fn simulate_and_align(n: usize, p: usize, k: usize, iterations: usize, seed: u64) -> matchalign::Result<Traces> {
    let ds = generate(&GeneratorConfig::new(n, p, k, Scenario::Sparse, seed))?;
    let cfg = SamplerConfig {
        iterations,
        burn_in: iterations / 5,
        seed,
        ..Default::default()
    };
    let raw = gibbs_sample(&ds.data, &cfg, k)?;
    let out = match_align(&raw, &AlignConfig::default())?;

    let balance = |i: usize, j: usize| {
        let (pos, neg) = sign_shares(&raw.entry_series(i, j));
        pos.min(neg)
    };
    let (i, j) = (0..p)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .max_by(|&(a, b), &(c, d)| balance(a, b).total_cmp(&balance(c, d)))
        .expect("p, k >= 1");
    let raw_trace = raw.entry_series(i, j);
    let aligned_trace = out.aligned.entry_series(i, j);
    Ok(Traces {
        entry: (i + 1, j + 1),
        raw_positive_share: sign_shares(&raw_trace).0,
        aligned_positive_share: sign_shares(&aligned_trace).0,
        raw: raw_trace,
        aligned: aligned_trace,
        covariance_discrepancy_raw: covariance_discrepancy(&raw, &raw)?,
        covariance_discrepancy_aligned: covariance_discrepancy(&raw, &out.aligned)?,
        mean_ess_ratio_raw: mean_ess_ratio(&raw)?,
        mean_ess_ratio_aligned: mean_ess_ratio(&out.aligned)?,
        pivot: out.report.pivot.index + 1,
    })
}

#[derive(Debug, Serialize)]
pub struct VarimaxCurve {
    /// Rotation angles in [0, pi/2).
    pub angles: Vec<f64>,
    pub criterion: Vec<f64>,
    /// Angle and criterion reached by `varimax_rotate`.
    pub varimax_angle: f64,
    pub varimax_criterion: f64,
    pub sweeps: usize,
}

fn planar(theta: f64) -> Matrix {
    let (s, c) = theta.sin_cos();
    Matrix::from_rows(&[[c, -s], [s, c]]).expect("2x2")
}

/// Varimax criterion of a random p x 2 matrix as a function of the rotation
/// angle, with the optimum found by the library marked.
pub fn varimax_curve(p: usize, points: usize, seed: u64) -> matchalign::Result<VarimaxCurve> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = LoadingsMatrix::new(gaussian_matrix(&mut rng, p, 2, 1.0))?;
    let quarter = std::f64::consts::FRAC_PI_2;
    let angles: Vec<f64> = (0..points).map(|i| quarter * i as f64 / points as f64).collect();
    let criterion = angles
        .iter()
        .map(|&t| m.matmul(&planar(t)).map(|r| varimax_criterion(&r)))
        .collect::<matchalign::Result<_>>()?;
    let r = varimax_rotate(&m, &VarimaxConfig::default())?;
    // Columns may come back swapped or negated; those leave the criterion
    // unchanged, so the angle is only meaningful modulo pi/2.
    let angle = r.rotation[(1, 0)].atan2(r.rotation[(0, 0)]).rem_euclid(quarter);
    Ok(VarimaxCurve {
        angles,
        criterion,
        varimax_angle: angle,
        varimax_criterion: r.criterion,
        sweeps: r.iterations,
    })
}

#[derive(Debug, Serialize)]
pub struct MatchInstance {
    /// Row-major p x k.
    pub pivot: Vec<Vec<f64>>,
    pub sample: Vec<Vec<f64>>,
    /// `distances[j][h] = [||a_j - c_h||, ||a_j + c_h||]`.
    pub distances: Vec<Vec<[f64; 2]>>,
    pub greedy: SignedPermutationRecord,
    pub exact: SignedPermutationRecord,
    pub greedy_loss: f64,
    pub exact_loss: f64,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect()).collect()
}

/// A pivot, a noisy signed-permuted copy, and what the greedy and exact
/// matchers make of it.
pub fn match_instance(p: usize, k: usize, noise: f64, seed: u64) -> matchalign::Result<MatchInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, piv) = noisy_instance(&mut rng, p, k, noise)?;
    let greedy = greedy_match(&a, &piv, &MatchConfig::default())?;
    let exact = exact_match_assignment(&a, &piv)?;
    let dist = |x: &[f64], y: &[f64], s: f64| x.iter().zip(y).map(|(u, v)| (u - s * v).powi(2)).sum::<f64>().sqrt();
    let distances = (0..k)
        .map(|j| (0..k).map(|h| [dist(a.column(j), piv.column(h), 1.0), dist(a.column(j), piv.column(h), -1.0)]).collect())
        .collect();
    Ok(MatchInstance {
        pivot: rows(&piv),
        sample: rows(&a),
        distances,
        greedy_loss: match_loss(&a, &greedy, &piv)?,
        exact_loss: match_loss(&a, &exact, &piv)?,
        greedy: (&greedy).into(),
        exact: (&exact).into(),
    })
}

fn json<T: Serialize>(r: matchalign::Result<T>) -> Result<String, String> {
    r.map(|v| serde_json::to_string(&v).expect("plain data serializes"))
        .map_err(|e| e.to_string())
}

pub fn simulate_and_align_json(n: usize, p: usize, k: usize, iterations: usize, seed: u64) -> Result<String, String> {
    json(simulate_and_align(n, p, k, iterations, seed))
}

pub fn varimax_curve_json(p: usize, points: usize, seed: u64) -> Result<String, String> {
    json(varimax_curve(p, points, seed))
}

pub fn match_instance_json(p: usize, k: usize, noise: f64, seed: u64) -> Result<String, String> {
    json(match_instance(p, k, noise, seed))
}

#[wasm_bindgen(js_name = simulateAndAlign)]
pub fn wasm_simulate_and_align(n: usize, p: usize, k: usize, iterations: usize, seed: u32) -> Result<String, JsError> {
    simulate_and_align_json(n, p, k, iterations, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = varimaxCurve)]
pub fn wasm_varimax_curve(p: usize, points: usize, seed: u32) -> Result<String, JsError> {
    varimax_curve_json(p, points, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = matchInstance)]
pub fn wasm_match_instance(p: usize, k: usize, noise: f64, seed: u32) -> Result<String, JsError> {
    match_instance_json(p, k, noise, seed.into()).map_err(|e| JsError::new(&e))
}
