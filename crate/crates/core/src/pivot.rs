//! Choice of the reference sample that every other sample is matched to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::{Chain, LoadingsMatrix};
use crate::parallel;

/// Relative threshold below which the smallest singular value counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Fraction of infinite condition numbers above which the whole chain falls
/// back to the largest singular value.
pub const DEFAULT_INFINITE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PivotStatistic {
    ConditionNumber,
    LargestSingularValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PivotConfig {
    /// Use this statistic regardless of the fallback rule.
    pub force_statistic: Option<PivotStatistic>,
    pub infinite_fraction: f64,
    pub rank_tolerance: f64,
}

impl Default for PivotConfig {
    fn default() -> Self {
        PivotConfig {
            force_statistic: None,
            infinite_fraction: DEFAULT_INFINITE_FRACTION,
            rank_tolerance: RANK_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PivotSelection {
    /// Position of the pivot in the chain (0-based).
    pub index: usize,
    pub pivot: LoadingsMatrix,
    pub statistic_used: PivotStatistic,
    /// Per-sample values of `statistic_used`.
    pub statistics: Vec<f64>,
}

pub fn singular_values(m: &LoadingsMatrix) -> Result<Vec<f64>> {
    linalg::singular_values(m)
}

/// `sigma_max / sigma_min`, or `+inf` when `sigma_min <= rank_tolerance * sigma_max`.
pub fn condition_number_with_tolerance(m: &LoadingsMatrix, rank_tolerance: f64) -> Result<f64> {
    let sv = singular_values(m)?;
    Ok(condition_from_singular_values(&sv, rank_tolerance))
}

pub fn condition_number(m: &LoadingsMatrix) -> Result<f64> {
    condition_number_with_tolerance(m, RANK_TOLERANCE)
}

fn condition_from_singular_values(sv: &[f64], rank_tolerance: f64) -> f64 {
    let max = sv[0];
    let min = sv[sv.len() - 1];
    if max == 0.0 || min <= rank_tolerance * max {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Index of the lower median, rank `floor((T+1)/2)` in ascending order; equal
/// values are ranked by position, so ties go to the earliest sample.
pub fn lower_median_index(values: &[f64]) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(values.len() + 1) / 2 - 1];
    values.iter().position(|v| v.total_cmp(&median).is_eq())
}

pub fn select_pivot(c: &Chain, cfg: &PivotConfig) -> Result<PivotSelection> {
    if c.is_empty() {
        return Err(Error::InvalidInput("cannot select a pivot from an empty chain".into()));
    }
    let singular = parallel::map_indexed(c.samples(), |t, s| singular_values(s).map_err(|e| e.at_sample(t)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let statistic_used = match cfg.force_statistic {
        Some(s) => s,
        None => {
            let infinite = singular
                .iter()
                .filter(|sv| condition_from_singular_values(sv, cfg.rank_tolerance).is_infinite())
                .count();
            if infinite as f64 > cfg.infinite_fraction * c.len() as f64 {
                log::info!(
                    "{infinite} of {} samples are rank deficient; pivoting on the largest singular value",
                    c.len()
                );
                PivotStatistic::LargestSingularValue
            } else {
                PivotStatistic::ConditionNumber
            }
        }
    };
    let statistics: Vec<f64> = singular
        .iter()
        .map(|sv| match statistic_used {
            PivotStatistic::ConditionNumber => condition_from_singular_values(sv, cfg.rank_tolerance),
            PivotStatistic::LargestSingularValue => sv[0],
        })
        .collect();
    let index = lower_median_index(&statistics).expect("non-empty");
    Ok(PivotSelection {
        index,
        pivot: c.samples()[index].clone(),
        statistic_used,
        statistics,
    })
}
