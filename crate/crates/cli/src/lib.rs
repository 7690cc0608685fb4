//! Benchmark harness for the federated approximate-query engine: synthetic
//! data generation, provider ingestion, workload execution with accuracy and
//! speed-up metrics, the secure-aggregation noise comparison, and the
//! learning-based inference attack.

pub mod attack;
pub mod datagen;
pub mod metrics;
pub mod report;
pub mod setup;
pub mod smccompare;
pub mod workload;

use std::path::Path;

use anyhow::Result;

use attack::{nbc_attack, AttackConfig, AttackOutcome, FederationOracle};
use setup::{load_federation, FederationParams};

/// Loads the federation with the composition's per-query budget and runs the
/// inference attack end to end.
pub fn run_attack(
    data: &Path,
    config: &AttackConfig,
    base: &FederationParams,
) -> Result<AttackOutcome> {
    // the per-query budget depends on the query count, which depends on the
    // schema; probe the schema first
    let probe = load_federation(data, base)?;
    let sa_size = probe.schema.dimensions()[probe.schema.dim_index(&config.sa_dim)?].domain_size();
    let qi_sizes: Result<Vec<usize>, _> = config
        .qi_dims
        .iter()
        .map(|n| probe.schema.dim_index(n).map(|i| probe.schema.dimensions()[i].domain_size()))
        .collect();
    let total = attack::n_queries(sa_size, &qi_sizes?);
    let budget = attack::per_query_budget(config, total)?;
    drop(probe);

    let params = FederationParams {
        budget,
        ..base.clone()
    };
    let mut fed = load_federation(data, &params)?;
    let rows: Vec<_> = fed
        .provider_clusters
        .iter()
        .flat_map(|set| set.clusters().iter().flat_map(|c| c.rows.iter().cloned()))
        .collect();
    let schema = fed.schema.clone();
    let mut oracle = FederationOracle::new(&mut fed, config, total)?;
    nbc_attack(&mut oracle, &schema, &rows, config)
}
