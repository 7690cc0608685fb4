//! Workload generation and execution against a loaded federation, timing the
//! federated path against full-scan and metadata-pruned baselines.

use std::time::Instant;

use anyhow::{bail, Result};
use fedaqp_core::datamodel::{evaluate_exact, Aggregation, Interval, RangeQuery, Schema};
use fedaqp_core::dpcore::Accountant;
use fedaqp_core::federation::MessageBody;
use fedaqp_core::metastore::identify_cq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::metrics::{relative_error, MetricsReport, QueryMetrics};
use crate::setup::LoadedFederation;

/// A workload is `m` distinct random queries constraining `dims_per_query`
/// dimensions each.
#[derive(Debug, Clone)]
pub struct WorkloadSpec {
    pub m: usize,
    pub dims_per_query: usize,
    pub aggregation: Aggregation,
    pub sr: f64,
    pub seed: u64,
    /// Minimum interval width as a fraction of each queried dimension's
    /// domain; keeps desk-scale answers large enough to be meaningful.
    pub min_width_frac: f64,
    /// Keep only queries whose covered set reaches the approximation trigger
    /// at every provider.
    pub require_approximation: bool,
}

/// Generates the workload, retrying candidates until `m` distinct queries
/// satisfy the trigger predicate.
pub fn generate_workload(
    spec: &WorkloadSpec,
    schema: &Schema,
    triggers_everywhere: impl Fn(&RangeQuery) -> bool,
) -> Result<Vec<RangeQuery>> {
    let dims = schema.dimensions();
    if spec.dims_per_query == 0 || spec.dims_per_query > dims.len() {
        bail!(
            "queries must constrain between 1 and {} dimensions",
            dims.len()
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out: Vec<RangeQuery> = Vec::with_capacity(spec.m);
    let mut seen = std::collections::BTreeSet::new();
    let mut attempts = 0usize;
    let max_attempts = 1000 * spec.m.max(1);
    while out.len() < spec.m {
        attempts += 1;
        if attempts > max_attempts {
            bail!(
                "workload generation stalled after {attempts} attempts \
                 ({} of {} queries found)",
                out.len(),
                spec.m
            );
        }
        let mut indices: Vec<usize> = (0..dims.len()).collect();
        for i in (1..indices.len()).rev() {
            let j = rng.random_range(0..=i);
            indices.swap(i, j);
        }
        indices.truncate(spec.dims_per_query);
        let mut ranges = Vec::with_capacity(spec.dims_per_query);
        for &d in &indices {
            let size = dims[d].domain_size() as i64;
            let min_width = ((size as f64 * spec.min_width_frac).ceil() as i64).clamp(1, size);
            let width = rng.random_range(min_width..=size);
            let lo = rng.random_range(0..=size - width);
            ranges.push((
                dims[d].name().to_string(),
                Interval {
                    lo,
                    hi: lo + width - 1,
                },
            ));
        }
        let query = RangeQuery::new(spec.aggregation, ranges)?;
        let key = format!("{query:?}");
        if !seen.insert(key) {
            continue;
        }
        if spec.require_approximation && !triggers_everywhere(&query) {
            continue;
        }
        out.push(query);
    }
    Ok(out)
}

/// Runs every query end to end, measuring the federated answer and both
/// baselines. Refusals are recorded, not fatal.
pub fn run_workload(
    queries: &[RangeQuery],
    fed: &mut LoadedFederation,
    accountant: &mut Accountant,
    sr: f64,
) -> Result<MetricsReport> {
    let mut rows = Vec::with_capacity(queries.len());
    for (query_index, query) in queries.iter().enumerate() {
        let t0 = Instant::now();
        let reply = fed.aggregator.handle_query(query, sr, accountant);
        let fed_micros = t0.elapsed().as_micros();
        let (federated, refused) = match reply.body {
            MessageBody::Answer { value, .. } => (value, false),
            _ => (f64::NAN, true),
        };

        let bound = query.bind(&fed.schema)?;
        let t1 = Instant::now();
        let exact: f64 = fed
            .provider_clusters
            .iter()
            .map(|set| evaluate_exact(&bound, set.clusters()))
            .sum();
        let baseline_micros = t1.elapsed().as_micros();

        let t2 = Instant::now();
        let mut pruned_total = 0.0;
        for (set, meta) in fed.provider_clusters.iter().zip(&fed.provider_meta) {
            for id in identify_cq(&bound, meta) {
                pruned_total +=
                    fedaqp_core::datamodel::evaluate_on_cluster(&bound, set.cluster(id));
            }
        }
        let pruned_baseline_micros = t2.elapsed().as_micros();
        debug_assert_eq!(pruned_total, exact);

        let mut clusters_read_frac = 0.0f64;
        let mut clusters_read_total = 0usize;
        let mut fallback_providers = 0usize;
        for ep in fed.aggregator.endpoints() {
            let stats = ep.node().stats();
            let frac = stats.last_query_reads as f64 / ep.node().cluster_count().max(1) as f64;
            clusters_read_frac = clusters_read_frac.max(frac);
            clusters_read_total += stats.last_query_reads;
            fallback_providers += usize::from(stats.last_query_fallback);
        }

        rows.push(QueryMetrics {
            query_index,
            aggregation: match query.aggregation {
                Aggregation::Count => "count".into(),
                Aggregation::Sum => "sum".into(),
            },
            dims: query.dims(),
            exact,
            federated,
            rel_error: if refused {
                None
            } else {
                relative_error(exact, federated)
            },
            refused,
            fed_micros,
            baseline_micros,
            pruned_baseline_micros,
            clusters_read_frac,
            clusters_read_total,
            fallback_providers,
        });
    }
    Ok(MetricsReport { rows })
}

/// The approximation-trigger predicate over in-process provider nodes.
pub fn approximation_trigger(fed: &LoadedFederation) -> impl Fn(&RangeQuery) -> bool + '_ {
    move |query: &RangeQuery| {
        fed.aggregator.endpoints().iter().all(|ep| {
            ep.node()
                .covered_count(query)
                .map(|n| n >= ep.node().n_min())
                .unwrap_or(false)
        })
    }
}
