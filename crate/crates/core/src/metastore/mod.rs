//! Per-cluster metadata: sorted proportion tables and min/max bounds, built
//! offline and consulted online to identify covered clusters and approximate
//! each cluster's matching proportion without touching row data.

mod persist;

pub use persist::{load_metadata, save_metadata};

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use thiserror::Error;

use crate::datamodel::{BoundQuery, Cluster, ClusterId, ClusterSet};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum MetaError {
    #[error("cluster {cluster_id} holds {size} rows, above the agreed capacity {capacity}")]
    CapacityViolation {
        cluster_id: ClusterId,
        size: usize,
        capacity: usize,
    },
    #[error("dimension index {0} out of range")]
    UnknownDimension(usize),
    #[error("metadata for cluster {cluster_id}: {reason}")]
    Parse { cluster_id: ClusterId, reason: String },
    #[error("global metadata: {0}")]
    ParseGlobal(String),
    #[error("io error at {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("threshold n_min must be >= 1")]
    InvalidNMin,
}

/// Proportion table of one dimension of one cluster: for every distinct rank
/// value `v` present, the number of rows with value >= `v`. Values ascend, so
/// the counts are non-increasing; dividing by the shared capacity S yields the
/// right-continuous step function R over arbitrary lookup points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimProportions {
    values: Vec<u32>,
    geq_counts: Vec<u32>,
}

impl DimProportions {
    pub fn entries(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.values.iter().copied().zip(self.geq_counts.iter().copied())
    }

    fn geq_count(&self, x: i64) -> u32 {
        let idx = self.values.partition_point(|&v| (v as i64) < x);
        if idx == self.values.len() {
            0
        } else {
            self.geq_counts[idx]
        }
    }
}

/// All per-dimension proportion tables of one cluster, with the shared
/// denominator S. Counts stay integral so persistence round-trips bit-exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProportionTable {
    pub cluster_id: ClusterId,
    capacity: usize,
    dims: Vec<DimProportions>,
}

impl ProportionTable {
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dims(&self) -> &[DimProportions] {
        &self.dims
    }

    /// R_geq(x) on one dimension: the stored proportion of the smallest stored
    /// value >= x, or 0 when x exceeds them all.
    pub fn lookup_r_geq(&self, dim: usize, x: i64) -> Result<f64, MetaError> {
        let table = self.dims.get(dim).ok_or(MetaError::UnknownDimension(dim))?;
        Ok(table.geq_count(x) as f64 / self.capacity as f64)
    }

    fn from_cluster(cluster: &Cluster, dims: usize, capacity: usize) -> ProportionTable {
        let mut tables = Vec::with_capacity(dims);
        for d in 0..dims {
            let mut vals: Vec<u32> = cluster.rows.iter().map(|r| r.coords[d]).collect();
            vals.sort_unstable();
            let mut values = Vec::new();
            let mut counts = Vec::new();
            let n = vals.len();
            let mut i = 0;
            while i < n {
                let v = vals[i];
                values.push(v);
                counts.push((n - i) as u32);
                while i < n && vals[i] == v {
                    i += 1;
                }
            }
            tables.push(DimProportions {
                values,
                geq_counts: counts,
            });
        }
        ProportionTable {
            cluster_id: cluster.id,
            capacity,
            dims: tables,
        }
    }
}

/// Per-dimension (min, max) rank bounds of one cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterBounds {
    pub per_dim: Vec<(u32, u32)>,
}

/// Global per-provider metadata: one bounds entry per cluster plus the agreed
/// capacity and the approximation threshold n_min.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalMeta {
    capacity: usize,
    n_min: usize,
    dim_names: Vec<String>,
    bounds: Vec<ClusterBounds>,
}

impl GlobalMeta {
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn n_min(&self) -> usize {
        self.n_min
    }

    pub fn dim_names(&self) -> &[String] {
        &self.dim_names
    }

    pub fn bounds(&self) -> &[ClusterBounds] {
        &self.bounds
    }

    pub fn from_parts(
        capacity: usize,
        n_min: usize,
        dim_names: Vec<String>,
        bounds: Vec<ClusterBounds>,
    ) -> GlobalMeta {
        GlobalMeta {
            capacity,
            n_min,
            dim_names,
            bounds,
        }
    }
}

fn bounds_of(cluster: &Cluster, dims: usize) -> ClusterBounds {
    let mut per_dim = Vec::with_capacity(dims);
    for d in 0..dims {
        let mut lo = u32::MAX;
        let mut hi = 0u32;
        for r in &cluster.rows {
            let v = r.coords[d];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        per_dim.push((lo, hi));
    }
    ClusterBounds { per_dim }
}

/// Builds global and per-cluster metadata for a provider's clusters.
pub fn build_metadata(
    clusters: &ClusterSet,
    n_min: usize,
) -> Result<(GlobalMeta, Vec<ProportionTable>), MetaError> {
    if n_min == 0 {
        return Err(MetaError::InvalidNMin);
    }
    let capacity = clusters.capacity();
    for c in clusters.clusters() {
        if c.rows.len() > capacity {
            return Err(MetaError::CapacityViolation {
                cluster_id: c.id,
                size: c.rows.len(),
                capacity,
            });
        }
    }
    let dims = clusters.schema().dimensions().len();
    let per_cluster = build_tables(clusters, dims, capacity);
    let bounds = clusters
        .clusters()
        .iter()
        .map(|c| bounds_of(c, dims))
        .collect();
    let dim_names = clusters
        .schema()
        .dimensions()
        .iter()
        .map(|d| d.name().to_string())
        .collect();
    Ok((
        GlobalMeta {
            capacity,
            n_min,
            dim_names,
            bounds,
        },
        per_cluster,
    ))
}

#[cfg(feature = "parallel")]
fn build_tables(clusters: &ClusterSet, dims: usize, capacity: usize) -> Vec<ProportionTable> {
    clusters
        .clusters()
        .par_iter()
        .map(|c| ProportionTable::from_cluster(c, dims, capacity))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn build_tables(clusters: &ClusterSet, dims: usize, capacity: usize) -> Vec<ProportionTable> {
    build_tables_seq(clusters, dims, capacity)
}

/// Sequential metadata build, the benchmark counterpart of [`build_metadata`].
pub fn build_metadata_seq(
    clusters: &ClusterSet,
    n_min: usize,
) -> Result<(GlobalMeta, Vec<ProportionTable>), MetaError> {
    if n_min == 0 {
        return Err(MetaError::InvalidNMin);
    }
    let capacity = clusters.capacity();
    let dims = clusters.schema().dimensions().len();
    let per_cluster = build_tables_seq(clusters, dims, capacity);
    let bounds = clusters
        .clusters()
        .iter()
        .map(|c| bounds_of(c, dims))
        .collect();
    let dim_names = clusters
        .schema()
        .dimensions()
        .iter()
        .map(|d| d.name().to_string())
        .collect();
    Ok((
        GlobalMeta {
            capacity,
            n_min,
            dim_names,
            bounds,
        },
        per_cluster,
    ))
}

fn build_tables_seq(clusters: &ClusterSet, dims: usize, capacity: usize) -> Vec<ProportionTable> {
    clusters
        .clusters()
        .iter()
        .map(|c| ProportionTable::from_cluster(c, dims, capacity))
        .collect()
}

/// Approximates the proportion R of a cluster's rows matching the query as the
/// product of per-dimension proportions. Each factor subtracts the proportion
/// above the interval, looked up at the successor rank of the upper bound, so
/// closed query intervals keep their meaning.
pub fn approx_r(query: &BoundQuery, table: &ProportionTable) -> Result<f64, MetaError> {
    let mut matching = 1.0f64;
    for (dim, iv) in &query.dims {
        let t = table.dims.get(*dim).ok_or(MetaError::UnknownDimension(*dim))?;
        let above_lo = t.geq_count(iv.lo);
        let above_hi = t.geq_count(iv.hi.saturating_add(1));
        matching *= (above_lo - above_hi) as f64 / table.capacity as f64;
    }
    Ok(matching)
}

/// The covered set: clusters whose per-dimension bounds intersect every query
/// interval. A superset of the clusters that actually contain matching rows.
pub fn identify_cq(query: &BoundQuery, meta: &GlobalMeta) -> Vec<ClusterId> {
    meta.bounds
        .iter()
        .enumerate()
        .filter(|(_, b)| {
            query
                .dims
                .iter()
                .all(|(dim, iv)| iv.intersects(b.per_dim[*dim].0 as i64, b.per_dim[*dim].1 as i64))
        })
        .map(|(id, _)| id)
        .collect()
}
