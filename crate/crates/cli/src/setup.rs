//! Ingestion and federation assembly shared by the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fedaqp_core::datamodel::{
    build_count_tensor, load_provider, partition_horizontal, save_provider, split_into_clusters,
    ClusterOrder, ClusterSet, Dimension, Schema,
};
use fedaqp_core::dpcore::{Accountant, Budget, HpSplit, Ratio};
use fedaqp_core::federation::{
    build_in_process, Aggregator, AggregatorConfig, InProcessEndpoint, ProviderConfig,
    ProviderNode,
};
use fedaqp_core::metastore::{self, GlobalMeta};
use fedaqp_core::sampling::ReplacementMode;

use crate::datagen::{generate_rows, DataSpec};

pub fn provider_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("provider_{index}"))
}

/// Generates data, builds the count tensor, partitions it horizontally, and
/// writes one cluster directory per provider. Returns the cluster capacity
/// that was used.
pub fn ingest(
    spec: &DataSpec,
    providers: usize,
    capacity: Option<usize>,
    capacity_pct: f64,
    order: ClusterOrder,
    out: &Path,
) -> Result<usize> {
    if providers == 0 {
        bail!("at least one provider required");
    }
    let dims: Vec<Dimension> = spec
        .columns
        .iter()
        .map(|c| Dimension::dense(c.name.clone(), c.domain_size))
        .collect();
    let schema = Schema::new(dims, "measure")?;
    let rows = generate_rows(spec);
    let names: Vec<&str> = spec.columns.iter().map(|c| c.name.as_str()).collect();
    let tensor = build_count_tensor(&schema, &rows, &names)?;
    let parts = partition_horizontal(&tensor, providers, spec.seed)?;

    let per_provider_rows = parts.iter().map(|p| p.row_count()).max().unwrap_or(1);
    // Choose the cluster count first and derive the capacity from it, so the
    // trailing cluster stays near-full. A tiny remainder cluster would carry a
    // microscopic proportion and blow up both its estimator weight and its
    // sensitivity when sampled.
    let capacity = match capacity {
        Some(c) => c,
        None => {
            let target = (per_provider_rows as f64 * capacity_pct / 100.0).max(1.0);
            let count = (per_provider_rows as f64 / target).round().max(1.0);
            (per_provider_rows as f64 / count).ceil() as usize
        }
    };
    for (i, part) in parts.iter().enumerate() {
        let clusters = split_into_clusters(part, capacity, order)?;
        save_provider(&provider_dir(out, i), &clusters)
            .with_context(|| format!("writing provider {i}"))?;
    }
    Ok(capacity)
}

/// Discovers `provider_*` directories under a data root.
pub fn discover_providers(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for i in 0.. {
        let dir = provider_dir(root, i);
        if dir.join("manifest").exists() {
            dirs.push(dir);
        } else {
            break;
        }
    }
    if dirs.is_empty() {
        bail!("no provider directories under {}", root.display());
    }
    Ok(dirs)
}

/// Builds (and persists) metadata for every provider directory.
pub fn build_meta(root: &Path, n_min: usize) -> Result<usize> {
    let dirs = discover_providers(root)?;
    for dir in &dirs {
        let clusters = load_provider(dir)?;
        let (meta, tables) = metastore::build_metadata(&clusters, n_min)?;
        metastore::save_metadata(dir, &meta, &tables)?;
    }
    Ok(dirs.len())
}

/// Run-level federation parameters, shared by every node.
#[derive(Debug, Clone)]
pub struct FederationParams {
    pub budget: Budget,
    pub hp: HpSplit,
    pub n_min: usize,
    pub smc_mode: bool,
    pub seed: u64,
}

impl FederationParams {
    pub fn parse(
        epsilon: &str,
        delta: &str,
        hp: &[String; 3],
        n_min: usize,
        smc_mode: bool,
        seed: u64,
    ) -> Result<FederationParams> {
        Ok(FederationParams {
            budget: Budget::parse(epsilon, delta)?,
            hp: HpSplit::parse(&hp[0], &hp[1], &hp[2])?,
            n_min,
            smc_mode,
            seed,
        })
    }
}

/// The in-process federation plus everything the harness needs for baselines.
pub struct LoadedFederation {
    pub aggregator: Aggregator<InProcessEndpoint>,
    pub schema: Schema,
    pub provider_clusters: Vec<ClusterSet>,
    pub provider_meta: Vec<GlobalMeta>,
}

/// Loads provider directories into an in-process federation. Metadata is
/// loaded when present and built on the fly otherwise.
pub fn load_federation(root: &Path, params: &FederationParams) -> Result<LoadedFederation> {
    let dirs = discover_providers(root)?;
    let mut nodes = Vec::new();
    let mut provider_clusters = Vec::new();
    let mut provider_meta = Vec::new();
    let mut schema = None;
    for (i, dir) in dirs.iter().enumerate() {
        let clusters = load_provider(dir).with_context(|| format!("loading {}", dir.display()))?;
        schema.get_or_insert_with(|| clusters.schema().clone());
        let (meta, tables) = match metastore::load_metadata(dir) {
            Ok(m) => m,
            Err(_) => metastore::build_metadata(&clusters, params.n_min)?,
        };
        provider_clusters.push(clusters.clone());
        provider_meta.push(meta.clone());
        let config = ProviderConfig {
            provider_id: i,
            n_min: params.n_min,
            budget: params.budget.split(&params.hp),
            smc_mode: params.smc_mode,
            seed: params.seed.wrapping_add(7919 * (i as u64 + 1)),
            replacement: ReplacementMode::WithoutReplacement,
        };
        nodes.push(ProviderNode::new(config, clusters, meta, tables));
    }
    let aggregator = build_in_process(
        AggregatorConfig {
            budget: params.budget,
            hp: params.hp,
            smc_mode: params.smc_mode,
            seed: params.seed,
        },
        nodes,
    );
    Ok(LoadedFederation {
        aggregator,
        schema: schema.expect("at least one provider"),
        provider_clusters,
        provider_meta,
    })
}

/// Accountant for an analyst with total budget (xi, psi).
pub fn analyst_accountant(xi: &str, psi: &str) -> Result<Accountant> {
    Ok(Accountant::sequential(
        Ratio::parse_decimal(xi)?,
        Ratio::parse_decimal(psi)?,
    ))
}
