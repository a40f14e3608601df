//! JSON report schema. Indices are 1-based and an infinite statistic is
//! written as `null`.

use serde::{Deserialize, Serialize};

use crate::align::{AlignConfig, AlignmentReport};
use crate::diagnostics::DiagnosticsReport;
use crate::matrix::{Sign, SignedPermutation};
use crate::pivot::{PivotSelection, PivotStatistic};
use crate::varimax::OrthogonalizeSummary;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedPermutationRecord {
    /// `perm[j]` is the 1-based source column of output column `j + 1`.
    pub perm: Vec<usize>,
    pub signs: Vec<Sign>,
}

impl From<&SignedPermutation> for SignedPermutationRecord {
    fn from(sp: &SignedPermutation) -> Self {
        SignedPermutationRecord {
            perm: sp.perm().iter().map(|p| p + 1).collect(),
            signs: sp.signs().to_vec(),
        }
    }
}

impl TryFrom<&SignedPermutationRecord> for SignedPermutation {
    type Error = crate::Error;

    fn try_from(r: &SignedPermutationRecord) -> crate::Result<Self> {
        let perm = r
            .perm
            .iter()
            .map(|&p| p.checked_sub(1).ok_or_else(|| crate::Error::InvalidInput("permutation indices are 1-based".into())))
            .collect::<crate::Result<Vec<_>>>()?;
        SignedPermutation::new(perm, r.signs.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotRecord {
    pub index: usize,
    pub statistic_used: PivotStatistic,
    /// `null` marks an infinite condition number.
    pub statistics: Vec<Option<f64>>,
}

impl From<&PivotSelection> for PivotRecord {
    fn from(p: &PivotSelection) -> Self {
        PivotRecord {
            index: p.index + 1,
            statistic_used: p.statistic_used,
            statistics: p.statistics.iter().map(|&s| s.is_finite().then_some(s)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub permutations: Vec<SignedPermutationRecord>,
    pub losses: Vec<f64>,
    pub total_loss: f64,
    pub pivot: PivotRecord,
    pub comparisons_per_sample: usize,
    pub unstable_samples: Vec<usize>,
}

impl From<&AlignmentReport> for AlignmentRecord {
    fn from(r: &AlignmentReport) -> Self {
        AlignmentRecord {
            permutations: r.permutations.iter().map(Into::into).collect(),
            losses: r.losses.clone(),
            total_loss: r.total_loss,
            pivot: (&r.pivot).into(),
            comparisons_per_sample: r.comparisons_per_sample,
            unstable_samples: r.unstable_samples.iter().map(|t| t + 1).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarimaxRecord {
    pub not_converged: Vec<usize>,
    pub max_iterations_used: usize,
}

impl From<&OrthogonalizeSummary> for VarimaxRecord {
    fn from(s: &OrthogonalizeSummary) -> Self {
        VarimaxRecord {
            not_converged: s.not_converged.iter().map(|t| t + 1).collect(),
            max_iterations_used: s.max_iterations_used,
        }
    }
}

/// Diagnostics of the chain as it was before alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnalignedRecord {
    /// The covariance discrepancy using the raw posterior mean.
    pub covariance_discrepancy: f64,
    pub mean_ess_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainShape {
    pub p: usize,
    pub k: usize,
    #[serde(rename = "T")]
    pub t: usize,
}

/// Output of `matchalign align`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignRunReport {
    pub schema_version: u32,
    pub chain: ChainShape,
    pub config: AlignConfig,
    pub varimax: VarimaxRecord,
    pub alignment: AlignmentRecord,
    /// Absent when the chain is too short for ESS.
    pub diagnostics: Option<DiagnosticsReport>,
    pub unaligned: UnalignedRecord,
}

/// Output of `matchalign diagnose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseRunReport {
    pub schema_version: u32,
    pub chain: ChainShape,
    /// Discrepancy with the aligned posterior mean (when an aligned chain is given).
    pub covariance_discrepancy: Option<f64>,
    /// Discrepancy with the raw posterior mean (when a raw chain is given).
    pub covariance_discrepancy_unaligned: Option<f64>,
    pub mean_ess_ratio_aligned: Option<f64>,
    pub mean_ess_ratio_raw: Option<f64>,
    /// Row-major p x k.
    pub per_entry_ess_aligned: Option<Vec<Vec<f64>>>,
    pub per_entry_ess_raw: Option<Vec<Vec<f64>>>,
    pub trace_files: Vec<String>,
}
