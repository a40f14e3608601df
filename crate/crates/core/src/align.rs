//! Signed column matching of orthogonalized samples against the pivot.
//!
//! [`greedy_match`] is the production matcher. [`exact_match_assignment`] and
//! [`brute_force_match`] are exact per-sample minimizers of the same loss, kept
//! as quality baselines and test oracles.

use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{Error, Result};
use crate::matrix::{apply_signed_permutation, Chain, LoadingsMatrix, Sign, SignedPermutation};
use crate::parallel;
use crate::pivot::{self, PivotConfig, PivotSelection};
use crate::varimax::{self, OrthogonalizeSummary, VarimaxConfig};

/// Largest k accepted by [`brute_force_match`].
pub const BRUTE_FORCE_MAX_K: usize = 8;

/// Order in which sample columns pick their pivot column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchOrder {
    /// Largest-norm column first; equal norms by column index.
    #[default]
    ByDescendingNorm,
    /// Column 1 first. Suits priors with increasing shrinkage across columns.
    NaturalColumnOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchConfig {
    pub order: MatchOrder,
}

/// Greedy match plus the work it took.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyMatch {
    pub permutation: SignedPermutation,
    /// Column-to-signed-column distances computed.
    pub distance_evaluations: usize,
    /// Column norms computed for the ordering.
    pub norm_evaluations: usize,
    /// Largest distance accepted for any single column.
    pub max_matched_distance: f64,
    /// Frobenius distance between the matched sample and the pivot.
    pub loss: f64,
}

fn check_shapes(a: &LoadingsMatrix, p: &LoadingsMatrix) -> Result<()> {
    if a.shape() != p.shape() {
        return Err(Error::Dimension(format!(
            "sample is {:?} but pivot is {:?}",
            a.shape(),
            p.shape()
        )));
    }
    Ok(())
}

/// `(||a - p||^2, ||a + p||^2)`.
fn signed_sq_distances(a: &[f64], p: &[f64]) -> (f64, f64) {
    let mut minus = 0.0;
    let mut plus = 0.0;
    for (&x, &y) in a.iter().zip(p) {
        let d = x - y;
        let s = x + y;
        minus += d * d;
        plus += s * s;
    }
    (minus, plus)
}

/// `||apply(a, sp) - p||_F`.
pub fn match_loss(a: &LoadingsMatrix, sp: &SignedPermutation, p: &LoadingsMatrix) -> Result<f64> {
    check_shapes(a, p)?;
    let aligned = apply_signed_permutation(a, sp)?;
    Ok(aligned.sub(p)?.frobenius_norm())
}

pub fn greedy_match(a: &LoadingsMatrix, p: &LoadingsMatrix, cfg: &MatchConfig) -> Result<SignedPermutation> {
    Ok(greedy_match_counted(a, p, cfg)?.permutation)
}

/// Greedy signed matching.
///
/// Columns of `a` are visited in `cfg.order`; each takes the nearest of the
/// still-free `+c_h`, `-c_h` pivot columns, which is then dropped together with
/// its negative. Distance ties go to the lower pivot index, then to `+`.
pub fn greedy_match_counted(a: &LoadingsMatrix, p: &LoadingsMatrix, cfg: &MatchConfig) -> Result<GreedyMatch> {
    check_shapes(a, p)?;
    let k = a.cols();

    let (order, norm_evaluations): (Vec<usize>, usize) = match cfg.order {
        MatchOrder::NaturalColumnOrder => ((0..k).collect(), 0),
        MatchOrder::ByDescendingNorm => {
            let norms = a.column_l2_norms();
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
            (order, k)
        }
    };

    let mut free = vec![true; k];
    let mut perm = vec![usize::MAX; k];
    let mut signs = vec![Sign::Plus; k];
    let mut distance_evaluations = 0;
    let mut max_matched_sq = 0.0f64;
    let mut total_sq = 0.0;
    for &src in &order {
        let col = a.column(src);
        let mut best: Option<(f64, usize, Sign)> = None;
        for h in (0..k).filter(|&h| free[h]) {
            let (minus, plus) = signed_sq_distances(col, p.column(h));
            distance_evaluations += 2;
            // `minus` is ||a - c_h||: the sample column matches +c_h.
            for (d, sign) in [(minus, Sign::Plus), (plus, Sign::Minus)] {
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, h, sign));
                }
            }
        }
        let (d, h, sign) = best.expect("a free pivot column remains");
        free[h] = false;
        perm[h] = src;
        signs[h] = sign;
        max_matched_sq = max_matched_sq.max(d);
        total_sq += d;
    }
    Ok(GreedyMatch {
        permutation: SignedPermutation::new(perm, signs)?,
        distance_evaluations,
        norm_evaluations,
        max_matched_distance: max_matched_sq.sqrt(),
        loss: total_sq.sqrt(),
    })
}

/// Exact minimizer of [`match_loss`].
///
/// The squared loss splits over columns, so with
/// `cost(j, h) = min(||a_j - c_h||^2, ||a_j + c_h||^2)` the optimum is a
/// linear assignment; each matched pair takes its cheaper sign.
pub fn exact_match_assignment(a: &LoadingsMatrix, p: &LoadingsMatrix) -> Result<SignedPermutation> {
    check_shapes(a, p)?;
    let k = a.cols();
    let mut sign_choice = vec![vec![Sign::Plus; k]; k];
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            (0..k)
                .map(|h| {
                    let (minus, plus) = signed_sq_distances(a.column(j), p.column(h));
                    if plus < minus {
                        sign_choice[j][h] = Sign::Minus;
                        plus
                    } else {
                        minus
                    }
                })
                .collect()
        })
        .collect();
    let pivot_of_source = assignment::solve(&cost);
    let mut perm = vec![0; k];
    let mut signs = vec![Sign::Plus; k];
    for (src, &h) in pivot_of_source.iter().enumerate() {
        perm[h] = src;
        signs[h] = sign_choice[src][h];
    }
    SignedPermutation::new(perm, signs)
}

/// Exhaustive search over all `k! 2^k` signed permutations, for small `k`.
/// Ties resolve to the lexicographically first `(perm, signs)` with `-` < `+`.
pub fn brute_force_match(a: &LoadingsMatrix, p: &LoadingsMatrix) -> Result<SignedPermutation> {
    check_shapes(a, p)?;
    let k = a.cols();
    if k > BRUTE_FORCE_MAX_K {
        return Err(Error::BruteForceCap {
            k,
            max: BRUTE_FORCE_MAX_K,
        });
    }
    // sq[h][src] = (cost with sign -, cost with sign +) for output column h
    let sq: Vec<Vec<[f64; 2]>> = (0..k)
        .map(|h| {
            (0..k)
                .map(|src| {
                    let (minus, plus) = signed_sq_distances(a.column(src), p.column(h));
                    [plus, minus]
                })
                .collect()
        })
        .collect();

    let mut perm: Vec<usize> = (0..k).collect();
    let mut best: Option<(f64, Vec<usize>, u32)> = None;
    loop {
        for mask in 0..(1u32 << k) {
            // bit (k-1-h) set means sign + in position h, so masks ascend
            // lexicographically in the signs
            let total: f64 = (0..k)
                .map(|h| {
                    let plus = (mask >> (k - 1 - h)) & 1;
                    sq[h][perm[h]][plus as usize]
                })
                .sum();
            if best.as_ref().is_none_or(|(b, _, _)| total < *b) {
                best = Some((total, perm.clone(), mask));
            }
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let (_, perm, mask) = best.expect("k >= 1");
    let signs = (0..k)
        .map(|h| if (mask >> (k - 1 - h)) & 1 == 1 { Sign::Plus } else { Sign::Minus })
        .collect();
    SignedPermutation::new(perm, signs)
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[derive(Debug, Clone)]
pub struct AlignmentReport {
    pub permutations: Vec<SignedPermutation>,
    /// Per-sample Frobenius distance to the pivot after alignment.
    pub losses: Vec<f64>,
    pub total_loss: f64,
    pub pivot: PivotSelection,
    /// Distances plus ordering norms evaluated per sample. With the
    /// drop-after-match rule this is `k(k+1) + k` for norm ordering and
    /// `k(k+1)` for natural order.
    pub comparisons_per_sample: usize,
    /// Samples where some column was matched at a distance above half the
    /// largest pivot column norm.
    pub unstable_samples: Vec<usize>,
}

/// Reorders and re-signs every sample of an orthogonalized chain to match
/// `piv.pivot`.
pub fn align_chain(c: &Chain, piv: &PivotSelection, cfg: &MatchConfig) -> Result<(Chain, AlignmentReport)> {
    let pivot = &piv.pivot;
    let max_pivot_norm = pivot.column_l2_norms().into_iter().fold(0.0, f64::max);
    let per_sample = parallel::map_indexed(c.samples(), |t, s| {
        let run = || -> Result<_> {
            let gm = greedy_match_counted(s, pivot, cfg)?;
            let aligned = apply_signed_permutation(s, &gm.permutation)?;
            let loss = gm.loss;
            Ok((gm, aligned, loss))
        };
        run().map_err(|e| e.at_sample(t))
    });

    let mut samples = Vec::with_capacity(c.len());
    let mut permutations = Vec::with_capacity(c.len());
    let mut losses = Vec::with_capacity(c.len());
    let mut unstable_samples = Vec::new();
    let mut comparisons_per_sample = 0;
    for (t, r) in per_sample.into_iter().enumerate() {
        let (gm, aligned, loss) = r?;
        comparisons_per_sample = gm.distance_evaluations + gm.norm_evaluations;
        if gm.max_matched_distance > 0.5 * max_pivot_norm {
            log::debug!(
                "sample {t}: column matched at distance {:.4} (pivot max column norm {:.4})",
                gm.max_matched_distance,
                max_pivot_norm
            );
            unstable_samples.push(t);
        }
        samples.push(aligned);
        permutations.push(gm.permutation);
        losses.push(loss);
    }
    if !unstable_samples.is_empty() {
        log::warn!(
            "{} of {} samples had a column matched farther than half the largest pivot column norm",
            unstable_samples.len(),
            c.len()
        );
    }
    let total_loss = losses.iter().sum();
    Ok((
        c.with_samples(samples),
        AlignmentReport {
            permutations,
            losses,
            total_loss,
            pivot: piv.clone(),
            comparisons_per_sample,
            unstable_samples,
        },
    ))
}

/// Settings for the full pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub varimax: VarimaxConfig,
    pub pivot: PivotConfig,
    pub matching: MatchConfig,
}

#[derive(Debug, Clone)]
pub struct MatchAlignOutput {
    pub orthogonalized: Chain,
    pub aligned: Chain,
    pub report: AlignmentReport,
    pub varimax: OrthogonalizeSummary,
}

/// Varimax every sample, pick the pivot, then match every sample to it.
pub fn match_align(c: &Chain, cfg: &AlignConfig) -> Result<MatchAlignOutput> {
    let (orthogonalized, summary) = varimax::orthogonalize_chain_detailed(c, &cfg.varimax)?;
    let piv = pivot::select_pivot(&orthogonalized, &cfg.pivot)?;
    let (aligned, report) = align_chain(&orthogonalized, &piv, &cfg.matching)?;
    Ok(MatchAlignOutput {
        orthogonalized,
        aligned,
        report,
        varimax: summary,
    })
}
