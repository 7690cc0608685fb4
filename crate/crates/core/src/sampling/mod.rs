//! Unequal-probability cluster sampling and estimation.
//!
//! Probabilities are proportional to the approximated matching proportions R;
//! cluster selection goes through the Exponential Mechanism so the choice
//! itself is private; the Hansen-Hurwitz estimator turns per-cluster answers
//! into an estimate of the full local answer; smooth sensitivity calibrates
//! the release noise.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use thiserror::Error;

use crate::datamodel::{evaluate_on_cluster, BoundQuery, ClusterId, ClusterSet};
use crate::dpcore::{self, DpError, SensitivityContext};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SamplingError {
    #[error("proportions must be non-negative")]
    NegativeProportion,
    #[error("degenerate distribution: all proportions are zero")]
    DegenerateDistribution,
    #[error("sample size {s} outside 1..={max}")]
    BadSampleSize { s: usize, max: usize },
    #[error("covered set is empty")]
    EmptyCoveredSet,
    #[error("answers and probabilities disagree in length ({answers} vs {probabilities})")]
    LengthMismatch { answers: usize, probabilities: usize },
    #[error("sampled cluster has zero probability but a non-zero answer")]
    ZeroProbabilitySample,
    #[error(transparent)]
    Dp(#[from] DpError),
}

/// Normalizes proportions into sampling probabilities `p_j = R_j / sum(R)`.
pub fn sampling_probabilities(r_hat: &[f64]) -> Result<Vec<f64>, SamplingError> {
    if r_hat.iter().any(|&r| r < 0.0 || !r.is_finite()) {
        return Err(SamplingError::NegativeProportion);
    }
    let total: f64 = r_hat.iter().sum();
    if total <= 0.0 {
        return Err(SamplingError::DegenerateDistribution);
    }
    Ok(r_hat.iter().map(|&r| r / total).collect())
}

/// Whether repeated EM draws may return the same cluster twice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplacementMode {
    /// Draw s distinct clusters, renormalizing the remaining weights after
    /// each draw. Duplicates add no information to the estimator.
    WithoutReplacement,
    /// The literal repeated-selection reading, kept for comparison runs.
    WithReplacement,
}

/// The per-query sampling state of one provider: the covered clusters, their
/// proportions, the derived probabilities, and the allocated sample size.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    pub cluster_ids: Vec<ClusterId>,
    pub r_hat: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub sample_size: usize,
    pub cluster_capacity: usize,
    /// True when all proportions were zero and sampling fell back to uniform
    /// probabilities over the covered set.
    pub uniform_fallback: bool,
}

impl SamplingPlan {
    /// Builds the plan, falling back to uniform probabilities when every
    /// proportion approximates to zero (the covered set is a superset, so the
    /// estimator stays defined; all true answers are provably zero then).
    pub fn new(
        cluster_ids: Vec<ClusterId>,
        r_hat: Vec<f64>,
        sample_size: usize,
        cluster_capacity: usize,
    ) -> Result<SamplingPlan, SamplingError> {
        if cluster_ids.is_empty() {
            return Err(SamplingError::EmptyCoveredSet);
        }
        if cluster_ids.len() != r_hat.len() {
            return Err(SamplingError::LengthMismatch {
                answers: cluster_ids.len(),
                probabilities: r_hat.len(),
            });
        }
        if sample_size == 0 || sample_size > cluster_ids.len() {
            return Err(SamplingError::BadSampleSize {
                s: sample_size,
                max: cluster_ids.len(),
            });
        }
        let (probabilities, uniform_fallback) = match sampling_probabilities(&r_hat) {
            Ok(p) => (p, false),
            Err(SamplingError::DegenerateDistribution) => {
                let n = cluster_ids.len() as f64;
                (vec![1.0 / n; cluster_ids.len()], true)
            }
            Err(e) => return Err(e),
        };
        Ok(SamplingPlan {
            cluster_ids,
            r_hat,
            probabilities,
            sample_size,
            cluster_capacity,
            uniform_fallback,
        })
    }

    pub fn sum_r(&self) -> f64 {
        self.r_hat.iter().sum()
    }
}

/// Privately samples cluster positions from the plan via the Exponential
/// Mechanism: each of the `sample_size` selections spends `eps_s / sample_size`
/// and weighs position i by `exp(eps_per_draw * p_i / (2 * delta_p))`.
///
/// Returns positions into `plan.cluster_ids`. Zero-probability clusters are
/// excluded from the draw domain (they provably answer zero and admit no
/// finite estimator weight); if fewer positive-probability clusters exist than
/// requested, the sample shrinks to all of them.
pub fn em_sampling<R: Rng + ?Sized>(
    plan: &SamplingPlan,
    eps_s: f64,
    delta_p: f64,
    mode: ReplacementMode,
    rng: &mut R,
) -> Result<Vec<usize>, SamplingError> {
    if eps_s.is_nan() || eps_s <= 0.0 {
        return Err(SamplingError::Dp(DpError::InvalidEpsilon(eps_s)));
    }
    let mut domain: Vec<usize> = (0..plan.cluster_ids.len())
        .filter(|&i| plan.probabilities[i] > 0.0)
        .collect();
    if domain.is_empty() {
        return Err(SamplingError::DegenerateDistribution);
    }
    let draws = plan.sample_size.min(domain.len());
    let eps_per_draw = eps_s / draws as f64;
    let mut selected = Vec::with_capacity(draws);
    for _ in 0..draws {
        let scores: Vec<f64> = domain.iter().map(|&i| plan.probabilities[i]).collect();
        let pick = dpcore::exponential_select(&scores, eps_per_draw, delta_p, rng)?;
        selected.push(domain[pick]);
        if mode == ReplacementMode::WithoutReplacement {
            domain.swap_remove(pick);
        }
    }
    selected.sort_unstable();
    Ok(selected)
}

/// The Hansen-Hurwitz estimator: the mean of per-cluster answers inflated by
/// their sampling probabilities.
pub fn hansen_hurwitz(answers: &[f64], probabilities: &[f64]) -> Result<f64, SamplingError> {
    if answers.is_empty() || answers.len() != probabilities.len() {
        return Err(SamplingError::LengthMismatch {
            answers: answers.len(),
            probabilities: probabilities.len(),
        });
    }
    let mut total = 0.0;
    for (&q, &p) in answers.iter().zip(probabilities) {
        if p.is_nan() || p <= 0.0 {
            return Err(SamplingError::ZeroProbabilitySample);
        }
        total += q / p;
    }
    Ok(total / answers.len() as f64)
}

/// Cluster access with a read counter, the instrumentation behind the
/// speed-up claims: an approximated query must touch exactly the sampled
/// clusters' row data.
pub struct ClusterReader<'a> {
    set: &'a ClusterSet,
    reads: AtomicUsize,
}

impl<'a> ClusterReader<'a> {
    pub fn new(set: &'a ClusterSet) -> ClusterReader<'a> {
        ClusterReader {
            set,
            reads: AtomicUsize::new(0),
        }
    }

    pub fn evaluate(&self, query: &BoundQuery, id: ClusterId) -> f64 {
        self.reads.fetch_add(1, Ordering::Relaxed);
        evaluate_on_cluster(query, self.set.cluster(id))
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.reads.store(0, Ordering::Relaxed);
    }

    pub fn set(&self) -> &ClusterSet {
        self.set
    }
}

/// The estimate, its sensitivity bookkeeping, and (outside secure-aggregation
/// mode) the noisy release.
#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub estimate: f64,
    pub per_cluster_sensitivity: Vec<f64>,
    pub avg_sensitivity: f64,
    /// Present exactly when the provider releases locally (non-SMC mode).
    pub dp_result: Option<f64>,
}

/// Runs the estimation pipeline over the sampled clusters: evaluate each
/// sampled cluster, form the Hansen-Hurwitz estimate from the plan's true
/// probabilities, average the per-cluster smooth sensitivities, and either
/// release with Laplace noise at scale `2 * avg_sensitivity / eps_e` or hand
/// the pair back unperturbed for secure aggregation.
pub fn estimate_q<R: Rng + ?Sized>(
    query: &BoundQuery,
    sample_positions: &[usize],
    plan: &SamplingPlan,
    reader: &ClusterReader<'_>,
    eps_e: f64,
    delta: f64,
    smc_mode: bool,
    rng: &mut R,
) -> Result<EstimateOutput, SamplingError> {
    if sample_positions.is_empty() {
        return Err(SamplingError::BadSampleSize {
            s: 0,
            max: plan.cluster_ids.len(),
        });
    }
    let answers = evaluate_sample(query, sample_positions, plan, reader);
    let probabilities: Vec<f64> = sample_positions
        .iter()
        .map(|&i| plan.probabilities[i])
        .collect();
    let estimate = hansen_hurwitz(&answers, &probabilities)?;

    let sum_r = plan.sum_r();
    let query_dims = query.dims.len();
    let mut per_cluster_sensitivity = Vec::with_capacity(sample_positions.len());
    for (pos, answer) in sample_positions.iter().zip(&answers) {
        let ctx = SensitivityContext {
            cluster_capacity: plan.cluster_capacity,
            query_dims,
            r: plan.r_hat[*pos],
            p: plan.probabilities[*pos],
            sum_r,
            answer: *answer,
        };
        per_cluster_sensitivity.push(dpcore::smooth_sensitivity(&ctx, eps_e, delta)?);
    }
    let avg_sensitivity =
        per_cluster_sensitivity.iter().sum::<f64>() / per_cluster_sensitivity.len() as f64;

    let dp_result = if smc_mode {
        None
    } else {
        let scale = 2.0 * avg_sensitivity / eps_e;
        Some(dpcore::laplace(estimate, scale, rng)?)
    };
    Ok(EstimateOutput {
        estimate,
        per_cluster_sensitivity,
        avg_sensitivity,
        dp_result,
    })
}

#[cfg(feature = "parallel")]
fn evaluate_sample(
    query: &BoundQuery,
    positions: &[usize],
    plan: &SamplingPlan,
    reader: &ClusterReader<'_>,
) -> Vec<f64> {
    positions
        .par_iter()
        .map(|&i| reader.evaluate(query, plan.cluster_ids[i]))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn evaluate_sample(
    query: &BoundQuery,
    positions: &[usize],
    plan: &SamplingPlan,
    reader: &ClusterReader<'_>,
) -> Vec<f64> {
    positions
        .iter()
        .map(|&i| reader.evaluate(query, plan.cluster_ids[i]))
        .collect()
}

/// The small-query path: when too few clusters are covered to make sampling
/// worthwhile, answer exactly over the covered clusters and release with
/// Laplace noise at scale `1 / eps_e` (one individual moves COUNT and SUM by
/// at most one unit).
pub fn local_exact_fallback<R: Rng + ?Sized>(
    query: &BoundQuery,
    covered: &[ClusterId],
    reader: &ClusterReader<'_>,
    eps_e: f64,
    rng: &mut R,
) -> Result<f64, SamplingError> {
    let exact: f64 = covered.iter().map(|&id| reader.evaluate(query, id)).sum();
    Ok(dpcore::laplace(exact, 1.0 / eps_e, rng)?)
}
