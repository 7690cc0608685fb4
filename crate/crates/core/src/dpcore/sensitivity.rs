//! Sensitivity bounds for the sampling pipeline and the smooth-sensitivity
//! iteration used to calibrate noise on released estimates.
//!
//! All bounds are with respect to the presence/absence of one individual:
//! adding one row to some cluster, or incrementing one Measure value by one.

use super::DpError;

/// Worst-case change of a cluster's matching proportion R when one row is
/// added: `1 - (1 - 1/S)^|D_Q|`.
pub fn delta_r(cluster_capacity: usize, query_dims: usize) -> f64 {
    let s = cluster_capacity as f64;
    1.0 - (1.0 - 1.0 / s).powi(query_dims as i32)
}

/// Sensitivity of the average of per-cluster proportions published in the
/// allocation phase: `max(delta_r / n_min, 1 / (n_min + 1))`.
pub fn delta_avg_r(cluster_capacity: usize, query_dims: usize, n_min: usize) -> f64 {
    let n = n_min as f64;
    (delta_r(cluster_capacity, query_dims) / n).max(1.0 / (n + 1.0))
}

/// Sensitivity of a cluster's sampling probability: `1 / (n_min * (n_min + 1))`.
pub fn delta_p(n_min: usize) -> f64 {
    let n = n_min as f64;
    1.0 / (n * (n + 1.0))
}

/// The two neighbouring scenarios that can dominate the local sensitivity of
/// the per-cluster estimator `Q(C)/p`. The other two conceivable scenarios are
/// always dominated by these and never enter the serving path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Another cluster gains the new row, shifting this cluster's probability.
    NeighborGainsRow,
    /// This cluster absorbs the individual as a Measure increment.
    MeasureIncrement,
}

/// Everything needed to evaluate the local-sensitivity series of one cluster.
#[derive(Debug, Clone, Copy)]
pub struct SensitivityContext {
    /// Agreed cluster capacity S.
    pub cluster_capacity: usize,
    /// Number of dimensions constrained by the query.
    pub query_dims: usize,
    /// This cluster's approximated matching proportion R.
    pub r: f64,
    /// This cluster's sampling probability p = R / sum_r.
    pub p: f64,
    /// Sum of proportions over all covered clusters.
    pub sum_r: f64,
    /// The query answer on this cluster, Q(C).
    pub answer: f64,
}

impl SensitivityContext {
    pub fn delta_r(&self) -> f64 {
        delta_r(self.cluster_capacity, self.query_dims)
    }
}

/// Local sensitivity of `Q(C)/p` at distance `k` under the given scenario.
pub fn ls_at_distance(scenario: Scenario, k: usize, ctx: &SensitivityContext) -> f64 {
    let k = k as f64;
    match scenario {
        Scenario::NeighborGainsRow => k * ctx.answer * ctx.delta_r() / ctx.r,
        Scenario::MeasureIncrement => k / ctx.p,
    }
}

/// Picks the scenario whose sensitivity series dominates for this cluster:
/// `NeighborGainsRow` exactly when `Q(C) > sum_r / delta_r`, ties going to
/// `MeasureIncrement`.
pub fn dominant_scenario(ctx: &SensitivityContext) -> Scenario {
    if ctx.answer > ctx.sum_r / ctx.delta_r() {
        Scenario::NeighborGainsRow
    } else {
        Scenario::MeasureIncrement
    }
}

/// Smoothing rate `beta = epsilon / (2 * ln(2 / delta))`.
pub fn beta(epsilon: f64, delta: f64) -> f64 {
    epsilon / (2.0 * (2.0 / delta).ln())
}

/// Smallest distance beyond which `exp(-beta k) * LS^k` can only decay for a
/// linearly growing LS series: `ceil(1 / (1 - exp(-beta))) + 1`.
pub fn k_bound(beta: f64) -> usize {
    debug_assert!(beta > 0.0);
    (1.0 / (1.0 - (-beta).exp())).ceil() as usize + 1
}

/// Smooth upper bound on the local sensitivity of this cluster's estimator:
/// `max_{k=0..k_bound} exp(-beta k) * LS^k` over the dominant scenario only.
///
/// Both scenarios' series are linear in k, so `k exp(-beta k)` is unimodal
/// and the scan's maximum sits at one of the two integers around `1/beta`
/// (the k-bound always covers them). Evaluating just those candidates returns
/// exactly what the full scan would, without iterating to the bound when
/// beta is small.
pub fn smooth_sensitivity(
    ctx: &SensitivityContext,
    epsilon: f64,
    delta: f64,
) -> Result<f64, DpError> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(DpError::InvalidEpsilon(epsilon));
    }
    if delta.is_nan() || delta <= 0.0 || delta >= 1.0 {
        return Err(DpError::InvalidDelta(delta));
    }
    let scenario = dominant_scenario(ctx);
    match scenario {
        Scenario::NeighborGainsRow if ctx.r.is_nan() || ctx.r <= 0.0 => {
            return Err(DpError::DegenerateContext("proportion R"));
        }
        Scenario::MeasureIncrement if ctx.p.is_nan() || ctx.p <= 0.0 => {
            return Err(DpError::DegenerateContext("sampling probability p"));
        }
        _ => {}
    }
    let b = beta(epsilon, delta);
    let kb = k_bound(b);
    let turn = 1.0 / b;
    let mut candidates = [0usize, 1, kb];
    if turn.is_finite() {
        candidates[0] = (turn.floor() as usize).min(kb);
        candidates[1] = (turn.ceil() as usize).min(kb);
    }
    let mut best = 0.0f64;
    for k in candidates {
        let v = (-b * k as f64).exp() * ls_at_distance(scenario, k, ctx);
        if v > best {
            best = v;
        }
    }
    Ok(best)
}
