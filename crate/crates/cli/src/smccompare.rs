//! Side-by-side comparison of the two release paths: per-provider local
//! perturbation versus one secure-aggregation perturbation at the maximum
//! sensitivity, recording injected noise and wall time per repetition.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use fedaqp_core::datamodel::{evaluate_exact, Aggregation, RangeQuery};
use fedaqp_core::dpcore::{Accountant, Ratio};
use fedaqp_core::federation::MessageBody;
use serde::{Deserialize, Serialize};

use crate::setup::{load_federation, FederationParams, LoadedFederation};
use crate::workload::{generate_workload, WorkloadSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmcCompareRow {
    pub query_index: usize,
    pub mode: String,
    pub rep: usize,
    pub value: f64,
    pub exact: f64,
    pub noise_abs_total: f64,
    pub noise_scale_max: f64,
    /// Closed-form variance of the release noise at the recorded scales:
    /// one Laplace term in smc mode, one per provider in plain mode.
    pub noise_var_total: f64,
    pub wall_micros: u128,
}

fn run_one(
    fed: &mut LoadedFederation,
    query: &RangeQuery,
    sr: f64,
    smc: bool,
) -> Result<(f64, f64, f64, f64, u128)> {
    let mut accountant = Accountant::sequential(Ratio::from_int(i64::MAX), Ratio::new(1, 2));
    let t0 = Instant::now();
    let reply = fed.aggregator.handle_query(query, sr, &mut accountant);
    let wall = t0.elapsed().as_micros();
    let value = match reply.body {
        MessageBody::Answer { value, .. } => value,
        other => anyhow::bail!("query refused during comparison: {other:?}"),
    };
    let (noise_abs, scale_max, var_total) = if smc {
        let s = fed.aggregator.stats();
        let scale = s.last_release_noise_scale;
        (s.last_release_noise_abs, scale, 2.0 * scale * scale)
    } else {
        let mut abs = 0.0;
        let mut scale: f64 = 0.0;
        let mut var = 0.0;
        for ep in fed.aggregator.endpoints() {
            let s = ep.node().stats();
            abs += s.last_release_noise_abs;
            scale = scale.max(s.last_release_noise_scale);
            var += 2.0 * s.last_release_noise_scale * s.last_release_noise_scale;
        }
        (abs, scale, var)
    };
    Ok((value, noise_abs, scale_max, var_total, wall))
}

/// Runs `queries` two-dimensional COUNT queries for `reps` repetitions in
/// both modes, reloading the federation with a fresh seed per repetition so
/// the noise draws vary.
pub fn run_comparison(
    root: &Path,
    base: &FederationParams,
    queries: usize,
    reps: usize,
    sr: f64,
    seed: u64,
) -> Result<Vec<SmcCompareRow>> {
    let probe = load_federation(root, base)?;
    let spec = WorkloadSpec {
        m: queries,
        dims_per_query: 2,
        aggregation: Aggregation::Count,
        sr,
        seed,
        min_width_frac: 0.25,
        require_approximation: false,
    };
    let workload = generate_workload(&spec, &probe.schema, |_| true)?;
    let exact: Vec<f64> = workload
        .iter()
        .map(|q| {
            let bound = q.bind(&probe.schema).unwrap();
            probe
                .provider_clusters
                .iter()
                .map(|set| evaluate_exact(&bound, set.clusters()))
                .sum()
        })
        .collect();
    drop(probe);

    let mut rows = Vec::new();
    for rep in 0..reps {
        for (smc, mode) in [(false, "plain"), (true, "smc")] {
            let params = FederationParams {
                smc_mode: smc,
                seed: seed.wrapping_add(1 + rep as u64),
                ..base.clone()
            };
            let mut fed = load_federation(root, &params)?;
            for (query_index, query) in workload.iter().enumerate() {
                let (value, noise_abs_total, noise_scale_max, noise_var_total, wall_micros) =
                    run_one(&mut fed, query, sr, smc)?;
                rows.push(SmcCompareRow {
                    query_index,
                    mode: mode.to_string(),
                    rep,
                    value,
                    exact: exact[query_index],
                    noise_abs_total,
                    noise_scale_max,
                    noise_var_total,
                    wall_micros,
                });
            }
        }
    }
    Ok(rows)
}

/// Per-query noise ranges and mean wall times per mode.
pub fn summarize(rows: &[SmcCompareRow]) -> String {
    let mut out = String::new();
    let queries: std::collections::BTreeSet<usize> =
        rows.iter().map(|r| r.query_index).collect();
    for q in queries {
        for mode in ["plain", "smc"] {
            let subset: Vec<&SmcCompareRow> = rows
                .iter()
                .filter(|r| r.query_index == q && r.mode == mode)
                .collect();
            if subset.is_empty() {
                continue;
            }
            let min = subset.iter().map(|r| r.noise_abs_total).fold(f64::MAX, f64::min);
            let max = subset.iter().map(|r| r.noise_abs_total).fold(0.0, f64::max);
            let wall =
                subset.iter().map(|r| r.wall_micros).sum::<u128>() / subset.len() as u128;
            out.push_str(&format!(
                "query {q} {mode:>5}: noise range [{min:.3}, {max:.3}], mean wall {wall} us\n"
            ));
        }
    }
    out
}
