//! Alignment quality: covariance discrepancy, effective sample size, traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Chain, Matrix};
use crate::parallel;

/// Shortest series accepted by the ESS estimator.
pub const MIN_ESS_LENGTH: usize = 10;

/// Largest per-sample relative disagreement tolerated between the raw and
/// aligned `L L^T`.
pub const GRAM_AGREEMENT_TOLERANCE: f64 = 1e-10;

fn mean_outer_gram(c: &Chain) -> Matrix {
    let p = c.p();
    let mut acc = Matrix::zeros(p, p);
    for s in c.samples() {
        acc = acc.add(&s.outer_gram()).expect("same shape");
    }
    acc.scale(1.0 / c.len() as f64)
}

fn check_same_shape(a: &Chain, b: &Chain) -> Result<()> {
    if a.len() != b.len() || a.p() != b.p() || a.k() != b.k() {
        return Err(Error::Dimension(format!(
            "chains differ: T={} p={} k={} vs T={} p={} k={}",
            a.len(),
            a.p(),
            a.k(),
            b.len(),
            b.p(),
            b.k()
        )));
    }
    Ok(())
}

/// `|| mean_t(L_t L_t^T) - m m^T ||_F` where `m` is the mean of `aligned`.
///
/// The first term uses `raw`. Alignment only applies signed permutations and
/// rotations, so each aligned sample must reproduce the raw `L L^T`; a
/// mismatch beyond [`GRAM_AGREEMENT_TOLERANCE`] means the chains do not belong
/// together and is an error. Passing the raw chain twice gives the
/// discrepancy of the unaligned posterior mean.
pub fn covariance_discrepancy(raw: &Chain, aligned: &Chain) -> Result<f64> {
    check_same_shape(raw, aligned)?;
    if !std::ptr::eq(raw, aligned) {
        let bad = parallel::map_indexed(raw.samples(), |t, r| {
            let rel = crate::matrix::relative_gram_difference(&aligned.samples()[t], r).unwrap_or(f64::INFINITY);
            (rel > GRAM_AGREEMENT_TOLERANCE).then_some((t, rel))
        })
        .into_iter()
        .flatten()
        .next();
        if let Some((t, rel)) = bad {
            return Err(Error::InvalidInput(format!(
                "sample {t}: aligned L L^T differs from raw by {rel:e} (relative)"
            )));
        }
    }
    let mean_gram = mean_outer_gram(raw);
    let mean = aligned.mean();
    Ok(mean_gram.sub(&mean.outer_gram())?.frobenius_norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EssFlag {
    Ok,
    /// Zero variance; ESS reported as T.
    ConstantSeries,
    /// Anticorrelation pushed the estimate above `T log10 T`; capped there.
    Capped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssEstimate {
    pub value: f64,
    pub flag: EssFlag,
}

/// Upper bound on ESS, `T log10(T)`.
pub fn ess_cap(t: usize) -> f64 {
    let t = t as f64;
    t * t.log10()
}

/// ESS with Geyer's initial positive sequence: autocorrelations are summed
/// in consecutive-lag pairs `rho_2m + rho_2m+1` while the pair sum stays
/// positive, and `ESS = T / (-1 + 2 * sum of pairs)`. Autocovariances use the
/// biased `1/T` normalization and are computed by direct summation, lag by
/// lag, only as far as the truncation point.
pub fn effective_sample_size(series: &[f64]) -> Result<EssEstimate> {
    let t = series.len();
    if t < MIN_ESS_LENGTH {
        return Err(Error::InvalidInput(format!(
            "effective sample size needs at least {MIN_ESS_LENGTH} values, got {t}"
        )));
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("series value {i} is not finite")));
    }
    let tf = t as f64;
    if series.iter().all(|&v| v == series[0]) {
        return Ok(EssEstimate {
            value: tf,
            flag: EssFlag::ConstantSeries,
        });
    }
    let mean = series.iter().sum::<f64>() / tf;
    let dev: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| -> f64 { dev[..t - lag].iter().zip(&dev[lag..]).map(|(a, b)| a * b).sum::<f64>() / tf };
    let gamma0 = autocov(0);
    if !(gamma0 > 0.0) {
        return Ok(EssEstimate {
            value: tf,
            flag: EssFlag::ConstantSeries,
        });
    }

    // The first pair (rho_0 + rho_1) always enters.
    let mut pair_sum = 1.0 + autocov(1) / gamma0;
    let mut m = 1;
    while 2 * m + 1 < t {
        let pair = (autocov(2 * m) + autocov(2 * m + 1)) / gamma0;
        if pair <= 0.0 {
            break;
        }
        pair_sum += pair;
        m += 1;
    }
    let tau = -1.0 + 2.0 * pair_sum;
    let cap = ess_cap(t);
    if tau <= 0.0 || tf / tau > cap {
        return Ok(EssEstimate {
            value: cap,
            flag: EssFlag::Capped,
        });
    }
    Ok(EssEstimate {
        value: tf / tau,
        flag: EssFlag::Ok,
    })
}

/// ESS of every loading entry, as a p x k matrix.
pub fn per_entry_ess(c: &Chain) -> Result<Matrix> {
    let (p, k) = (c.p(), c.k());
    let values = parallel::map_range(p * k, |idx| {
        let (i, j) = (idx % p, idx / p);
        effective_sample_size(&c.entry_series(i, j)).map(|e| e.value)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Matrix::from_col_major(p, k, values)
}

/// Mean over the p k loading entries of ESS / T.
pub fn mean_ess_ratio(c: &Chain) -> Result<f64> {
    let ess = per_entry_ess(c)?;
    let t = c.len() as f64;
    Ok(ess.as_slice().iter().map(|e| e / t).sum::<f64>() / ess.as_slice().len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub covariance_discrepancy: f64,
    pub mean_ess_ratio: f64,
    /// Row-major p x k.
    pub per_entry_ess: Vec<Vec<f64>>,
    pub elapsed_align_seconds: Option<f64>,
}

pub fn diagnostics_report(raw: &Chain, aligned: &Chain, elapsed_align_seconds: Option<f64>) -> Result<DiagnosticsReport> {
    let covariance_discrepancy = covariance_discrepancy(raw, aligned)?;
    let ess = per_entry_ess(aligned)?;
    let t = aligned.len() as f64;
    let ratio = ess.as_slice().iter().map(|e| e / t).sum::<f64>() / ess.as_slice().len() as f64;
    let per_entry_ess = (0..ess.rows()).map(|i| (0..ess.cols()).map(|j| ess[(i, j)]).collect()).collect();
    Ok(DiagnosticsReport {
        covariance_discrepancy,
        mean_ess_ratio: ratio,
        per_entry_ess,
        elapsed_align_seconds,
    })
}

/// Traces of selected loading entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    /// 0-based `(row, col)` per column of the table.
    pub entries: Vec<(usize, usize)>,
    pub series: Vec<Vec<f64>>,
}

impl TraceTable {
    pub fn len(&self) -> usize {
        self.series.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn export_traces(c: &Chain, entries: &[(usize, usize)]) -> Result<TraceTable> {
    for &(i, j) in entries {
        if i >= c.p() || j >= c.k() {
            return Err(Error::InvalidInput(format!(
                "entry ({}, {}) is outside a {}x{} loadings matrix",
                i + 1,
                j + 1,
                c.p(),
                c.k()
            )));
        }
    }
    Ok(TraceTable {
        entries: entries.to_vec(),
        series: entries.iter().map(|&(i, j)| c.entry_series(i, j)).collect(),
    })
}

/// Share of positive and negative values in a series.
pub fn sign_shares(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let pos = series.iter().filter(|&&v| v > 0.0).count() as f64;
    let neg = series.iter().filter(|&&v| v < 0.0).count() as f64;
    (pos / n, neg / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::LoadingsMatrix;

    fn chain_of(ms: Vec<Matrix>) -> Chain {
        Chain::new(ms.into_iter().map(|m| LoadingsMatrix::new(m).unwrap()).collect(), None).unwrap()
    }

    #[test]
    fn discrepancy_of_constant_chain_is_zero() {
        let l = Matrix::from_rows(&[[1.0, 0.5], [0.2, -1.0], [0.0, 0.3]]).unwrap();
        let c = chain_of(vec![l.clone(), l.clone(), l]);
        assert!(covariance_discrepancy(&c, &c.clone()).unwrap() <= 1e-15);
    }

    #[test]
    fn sign_switch_toy() {
        let l = Matrix::from_rows(&[[1.0, 0.5], [0.2, -1.0], [0.0, 0.3]]).unwrap();
        let raw = chain_of(vec![l.clone(), l.scale(-1.0)]);
        let aligned = chain_of(vec![l.clone(), l.clone()]);
        assert_eq!(covariance_discrepancy(&raw, &aligned).unwrap(), 0.0);
        let unaligned = covariance_discrepancy(&raw, &raw).unwrap();
        assert!((unaligned - l.outer_gram().frobenius_norm()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_chains_are_rejected() {
        let l = Matrix::from_rows(&[[1.0, 0.5], [0.2, -1.0], [0.0, 0.3]]).unwrap();
        let raw = chain_of(vec![l.clone(), l.clone()]);
        let other = chain_of(vec![l.clone(), l.scale(2.0)]);
        assert!(covariance_discrepancy(&raw, &other).is_err());
        let short = chain_of(vec![l]);
        assert!(covariance_discrepancy(&raw, &short).is_err());
    }

    #[test]
    fn ess_edge_cases() {
        assert!(effective_sample_size(&[1.0; 9]).is_err());
        let c = effective_sample_size(&[3.5; 20]).unwrap();
        assert_eq!(c.value, 20.0);
        assert_eq!(c.flag, EssFlag::ConstantSeries);
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let e = effective_sample_size(&alt).unwrap();
        assert!(e.value > 0.0 && e.value.is_finite());
        assert_eq!(e.flag, EssFlag::Capped);
        let mut bad = vec![0.0; 20];
        bad[4] = f64::NAN;
        assert!(effective_sample_size(&bad).is_err());
    }

    #[test]
    fn ess_is_affine_invariant() {
        let series: Vec<f64> = (0..500).map(|i| ((i * 37 % 101) as f64).sin() + 0.01 * i as f64).collect();
        let base = effective_sample_size(&series).unwrap().value;
        let moved: Vec<f64> = series.iter().map(|v| 3.7 * v - 12.0).collect();
        let other = effective_sample_size(&moved).unwrap().value;
        assert!((base - other).abs() <= 1e-8 * base);
    }

    #[test]
    fn traces() {
        let l = Matrix::from_rows(&[[1.0, 0.5], [0.2, -1.0], [0.0, 0.3]]).unwrap();
        let c = chain_of(vec![l.clone(); 4]);
        let t = export_traces(&c, &[(0, 0), (2, 1)]).unwrap();
        assert_eq!(t.series[0], vec![1.0; 4]);
        assert_eq!(t.series[1], vec![0.3; 4]);
        assert!(export_traces(&c, &[(3, 0)]).is_err());
        assert!(export_traces(&c, &[(0, 2)]).is_err());
    }

    #[test]
    fn short_chain_ratio_is_rejected() {
        let l = Matrix::from_rows(&[[1.0], [0.5], [0.2]]).unwrap();
        let c = chain_of(vec![l; 5]);
        assert!(mean_ess_ratio(&c).is_err());
    }
}
