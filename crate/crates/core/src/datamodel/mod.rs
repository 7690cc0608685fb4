//! Tabular data model: dimensions over encoded integer ranks, count tensors,
//! horizontal partitioning, fixed-capacity clusters, and exact range-query
//! evaluation used as the ground-truth baseline.

mod storage;

pub use storage::{load_provider, save_provider, StorageError};

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DataError {
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("dimension domain must be strictly increasing and non-empty")]
    BadDomain,
    #[error("duplicate dimension name `{0}`")]
    DuplicateDimension(String),
    #[error("measure name `{0}` collides with a dimension")]
    MeasureNameCollision(String),
    #[error("row arity {got} does not match schema arity {want}")]
    RowArity { got: usize, want: usize },
    #[error("value {value} not in the domain of dimension `{dim}`")]
    ValueOutOfDomain { dim: String, value: i64 },
    #[error("invalid cluster capacity: must be >= 1")]
    InvalidCapacity,
    #[error("invalid provider count: must be >= 1")]
    InvalidProviderCount,
    #[error("invalid range on `{dim}`: lower bound {lo} exceeds upper bound {hi}")]
    InvalidRange { dim: String, lo: i64, hi: i64 },
    #[error("query constrains no dimension")]
    EmptyQuery,
}

/// One dimension: a name plus its ordered discrete domain. Raw values are
/// encoded offline to dense ranks `0..domain_size`, and all range logic
/// operates on ranks so "the next value" is always well defined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    name: String,
    domain: Vec<i64>,
}

impl Dimension {
    pub fn new(name: impl Into<String>, domain: Vec<i64>) -> Result<Dimension, DataError> {
        if domain.is_empty() || domain.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::BadDomain);
        }
        Ok(Dimension {
            name: name.into(),
            domain,
        })
    }

    /// A dimension whose raw values are already the ranks `0..size`.
    pub fn dense(name: impl Into<String>, size: usize) -> Dimension {
        Dimension {
            name: name.into(),
            domain: (0..size as i64).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain_size(&self) -> usize {
        self.domain.len()
    }

    pub fn domain(&self) -> &[i64] {
        &self.domain
    }

    /// Rank of a raw value, if present.
    pub fn encode(&self, value: i64) -> Option<u32> {
        self.domain.binary_search(&value).ok().map(|i| i as u32)
    }

    pub fn decode(&self, rank: u32) -> i64 {
        self.domain[rank as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    dimensions: Vec<Dimension>,
    measure_name: String,
}

impl Schema {
    pub fn new(dimensions: Vec<Dimension>, measure_name: impl Into<String>) -> Result<Schema, DataError> {
        let measure_name = measure_name.into();
        let mut seen = HashMap::new();
        for (i, d) in dimensions.iter().enumerate() {
            if seen.insert(d.name.clone(), i).is_some() {
                return Err(DataError::DuplicateDimension(d.name.clone()));
            }
            if d.name == measure_name {
                return Err(DataError::MeasureNameCollision(measure_name));
            }
        }
        Ok(Schema {
            dimensions,
            measure_name,
        })
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn measure_name(&self) -> &str {
        &self.measure_name
    }

    pub fn dim_index(&self, name: &str) -> Result<usize, DataError> {
        self.dimensions
            .iter()
            .position(|d| d.name == name)
            .ok_or_else(|| DataError::UnknownDimension(name.to_string()))
    }
}

/// One aggregated row: rank coordinates plus the Measure count of the
/// individuals it represents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRow {
    pub coords: Vec<u32>,
    pub measure: u64,
}

/// A count tensor: distinct coordinate vectors, each with a Measure >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTensor {
    schema: Schema,
    rows: Vec<TensorRow>,
}

impl CountTensor {
    pub fn from_rows(schema: Schema, rows: Vec<TensorRow>) -> CountTensor {
        CountTensor { schema, rows }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[TensorRow] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn total_measure(&self) -> u64 {
        self.rows.iter().map(|r| r.measure).sum()
    }
}

pub type ClusterId = usize;

/// Fixed-capacity storage unit of tensor rows: the unit of sampling and I/O.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: ClusterId,
    pub rows: Vec<TensorRow>,
}

/// All clusters of one provider, with the federation-wide agreed capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    schema: Schema,
    capacity: usize,
    clusters: Vec<Cluster>,
}

impl ClusterSet {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster(&self, id: ClusterId) -> &Cluster {
        &self.clusters[id]
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn from_parts(schema: Schema, capacity: usize, clusters: Vec<Cluster>) -> ClusterSet {
        ClusterSet {
            schema,
            capacity,
            clusters,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregation {
    Count,
    Sum,
}

/// Closed interval of ranks on one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: i64,
    pub hi: i64,
}

impl Interval {
    pub fn contains(&self, rank: u32) -> bool {
        let v = rank as i64;
        self.lo <= v && v <= self.hi
    }

    pub fn intersects(&self, lo: i64, hi: i64) -> bool {
        self.lo <= hi && lo <= self.hi
    }
}

/// A COUNT/SUM range query: a closed rank interval per constrained dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeQuery {
    pub aggregation: Aggregation,
    /// (dimension name, interval), sorted by dimension name; non-empty.
    pub ranges: Vec<(String, Interval)>,
}

impl RangeQuery {
    pub fn new(
        aggregation: Aggregation,
        mut ranges: Vec<(String, Interval)>,
    ) -> Result<RangeQuery, DataError> {
        if ranges.is_empty() {
            return Err(DataError::EmptyQuery);
        }
        for (dim, iv) in &ranges {
            if iv.lo > iv.hi {
                return Err(DataError::InvalidRange {
                    dim: dim.clone(),
                    lo: iv.lo,
                    hi: iv.hi,
                });
            }
        }
        ranges.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(RangeQuery {
            aggregation,
            ranges,
        })
    }

    pub fn dims(&self) -> usize {
        self.ranges.len()
    }

    /// Resolves dimension names to schema indices once, for the hot loops.
    pub fn bind(&self, schema: &Schema) -> Result<BoundQuery, DataError> {
        let mut dims = Vec::with_capacity(self.ranges.len());
        for (name, iv) in &self.ranges {
            dims.push((schema.dim_index(name)?, *iv));
        }
        Ok(BoundQuery {
            aggregation: self.aggregation,
            dims,
        })
    }
}

/// A query with dimension names resolved to indices.
#[derive(Debug, Clone)]
pub struct BoundQuery {
    pub aggregation: Aggregation,
    pub dims: Vec<(usize, Interval)>,
}

impl BoundQuery {
    pub fn matches(&self, row: &TensorRow) -> bool {
        self.dims
            .iter()
            .all(|(idx, iv)| iv.contains(row.coords[*idx]))
    }

    pub fn row_value(&self, row: &TensorRow) -> f64 {
        match self.aggregation {
            Aggregation::Count => 1.0,
            Aggregation::Sum => row.measure as f64,
        }
    }
}

/// Builds a count tensor from raw tabular rows.
///
/// `aggregate_dims` names the dimensions the tensor keeps; input rows that
/// agree on all of them collapse into one tensor row whose Measure counts the
/// collapsed individuals.
pub fn build_count_tensor(
    schema: &Schema,
    raw_rows: &[Vec<i64>],
    aggregate_dims: &[&str],
) -> Result<CountTensor, DataError> {
    let mut keep = Vec::with_capacity(aggregate_dims.len());
    for name in aggregate_dims {
        keep.push(schema.dim_index(name)?);
    }
    let out_dims: Vec<Dimension> = keep
        .iter()
        .map(|&i| schema.dimensions[i].clone())
        .collect();
    let out_schema = Schema::new(out_dims, schema.measure_name.clone())?;

    let mut counts: HashMap<Vec<u32>, u64> = HashMap::new();
    for row in raw_rows {
        if row.len() != schema.dimensions.len() {
            return Err(DataError::RowArity {
                got: row.len(),
                want: schema.dimensions.len(),
            });
        }
        let mut coords = Vec::with_capacity(keep.len());
        for &i in &keep {
            let dim = &schema.dimensions[i];
            let rank = dim.encode(row[i]).ok_or(DataError::ValueOutOfDomain {
                dim: dim.name.clone(),
                value: row[i],
            })?;
            coords.push(rank);
        }
        *counts.entry(coords).or_insert(0) += 1;
    }
    let mut rows: Vec<TensorRow> = counts
        .into_iter()
        .map(|(coords, measure)| TensorRow { coords, measure })
        .collect();
    rows.sort_by(|a, b| a.coords.cmp(&b.coords));
    Ok(CountTensor {
        schema: out_schema,
        rows,
    })
}

/// Cluster layout policy; which rows co-locate is configuration, not a fixed
/// property of the format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterOrder {
    /// Sort on the first dimension (then remaining coordinates) before
    /// splitting. Skews value ranges across clusters, which is what makes
    /// proportional sampling pay off.
    SortedByFirstDim,
    /// Keep tensor insertion order.
    Insertion,
}

/// Splits a tensor into clusters of at most `capacity` rows; all but possibly
/// the last cluster are full.
pub fn split_into_clusters(
    tensor: &CountTensor,
    capacity: usize,
    order: ClusterOrder,
) -> Result<ClusterSet, DataError> {
    if capacity == 0 {
        return Err(DataError::InvalidCapacity);
    }
    let mut rows = tensor.rows.clone();
    if order == ClusterOrder::SortedByFirstDim {
        rows.sort_by(|a, b| a.coords.cmp(&b.coords));
    }
    let clusters = rows
        .chunks(capacity)
        .enumerate()
        .map(|(id, chunk)| Cluster {
            id,
            rows: chunk.to_vec(),
        })
        .collect();
    Ok(ClusterSet {
        schema: tensor.schema.clone(),
        capacity,
        clusters,
    })
}

/// A seeded row-to-provider assignment; providers share the schema and their
/// shares differ in size by at most one row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub provider_count: usize,
    /// Provider index per tensor row, aligned with the tensor's row order.
    pub assignment: Vec<usize>,
    pub seed: u64,
}

/// Plans an even horizontal partition by shuffling row indices under the seed
/// and dealing them out in contiguous runs.
pub fn plan_partition(
    tensor: &CountTensor,
    n: usize,
    seed: u64,
) -> Result<PartitionPlan, DataError> {
    if n == 0 {
        return Err(DataError::InvalidProviderCount);
    }
    let mut indices: Vec<usize> = (0..tensor.rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let total = indices.len();
    let base = total / n;
    let extra = total % n;
    let mut assignment = vec![0usize; total];
    let mut cursor = 0usize;
    for provider in 0..n {
        let size = base + usize::from(provider < extra);
        for &row in &indices[cursor..cursor + size] {
            assignment[row] = provider;
        }
        cursor += size;
    }
    Ok(PartitionPlan {
        provider_count: n,
        assignment,
        seed,
    })
}

/// Materializes a plan into per-provider tensors. Rows stay in shuffle order,
/// so insertion-order clustering downstream yields statistically uniform
/// clusters; sorting is a split-time choice.
pub fn apply_partition(tensor: &CountTensor, plan: &PartitionPlan) -> Vec<CountTensor> {
    assert_eq!(plan.assignment.len(), tensor.rows.len());
    let mut indices: Vec<usize> = (0..tensor.rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    indices.shuffle(&mut rng);
    let mut parts: Vec<Vec<TensorRow>> = vec![Vec::new(); plan.provider_count];
    for idx in indices {
        parts[plan.assignment[idx]].push(tensor.rows[idx].clone());
    }
    parts
        .into_iter()
        .map(|rows| CountTensor {
            schema: tensor.schema.clone(),
            rows,
        })
        .collect()
}

/// Partitions a tensor across `n` providers in one step.
pub fn partition_horizontal(
    tensor: &CountTensor,
    n: usize,
    seed: u64,
) -> Result<Vec<CountTensor>, DataError> {
    let plan = plan_partition(tensor, n, seed)?;
    Ok(apply_partition(tensor, &plan))
}

/// Exact evaluation of one cluster.
pub fn evaluate_on_cluster(query: &BoundQuery, cluster: &Cluster) -> f64 {
    cluster
        .rows
        .iter()
        .filter(|r| query.matches(r))
        .map(|r| query.row_value(r))
        .sum()
}

/// Exact evaluation over a set of clusters (the full-scan baseline).
#[cfg(feature = "parallel")]
pub fn evaluate_exact(query: &BoundQuery, clusters: &[Cluster]) -> f64 {
    clusters
        .par_iter()
        .map(|c| evaluate_on_cluster(query, c))
        .sum()
}

#[cfg(not(feature = "parallel"))]
pub fn evaluate_exact(query: &BoundQuery, clusters: &[Cluster]) -> f64 {
    evaluate_exact_seq(query, clusters)
}

/// Sequential evaluation, kept public as the benchmark counterpart and as an
/// independent oracle for the parallel path.
pub fn evaluate_exact_seq(query: &BoundQuery, clusters: &[Cluster]) -> f64 {
    clusters
        .iter()
        .map(|c| evaluate_on_cluster(query, c))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_dim_schema() -> Schema {
        Schema::new(
            vec![
                Dimension::new("service", vec![0, 1, 2]).unwrap(),
                Dimension::new("age", vec![35, 40]).unwrap(),
            ],
            "measure",
        )
        .unwrap()
    }

    #[test]
    fn dimension_invariants() {
        assert!(Dimension::new("d", vec![]).is_err());
        assert!(Dimension::new("d", vec![3, 3]).is_err());
        assert!(Dimension::new("d", vec![5, 3]).is_err());
        let d = Dimension::new("d", vec![10, 20, 30]).unwrap();
        assert_eq!(d.encode(20), Some(1));
        assert_eq!(d.encode(25), None);
        assert_eq!(d.decode(2), 30);
    }

    #[test]
    fn schema_invariants() {
        let dup = Schema::new(
            vec![Dimension::dense("a", 2), Dimension::dense("a", 2)],
            "m",
        );
        assert!(matches!(dup, Err(DataError::DuplicateDimension(_))));
        let clash = Schema::new(vec![Dimension::dense("a", 2)], "a");
        assert!(matches!(clash, Err(DataError::MeasureNameCollision(_))));
    }

    #[test]
    fn tensor_aggregates_shared_coordinates() {
        // Rows (Cardio,35) (Cardio,35) (Urology,40): keeping only age yields
        // (35, measure 2) and (40, measure 1).
        let schema = two_dim_schema();
        let raw = vec![vec![0, 35], vec![0, 35], vec![1, 40]];
        let t = build_count_tensor(&schema, &raw, &["age"]).unwrap();
        assert_eq!(t.rows().len(), 2);
        assert_eq!(t.rows()[0], TensorRow { coords: vec![0], measure: 2 });
        assert_eq!(t.rows()[1], TensorRow { coords: vec![1], measure: 1 });
        assert_eq!(t.total_measure(), 3);
    }

    #[test]
    fn identity_aggregation_gives_unit_measures() {
        let schema = two_dim_schema();
        let raw = vec![vec![0, 35], vec![1, 35], vec![2, 40]];
        let t = build_count_tensor(&schema, &raw, &["service", "age"]).unwrap();
        assert_eq!(t.rows().len(), 3);
        assert!(t.rows().iter().all(|r| r.measure == 1));
    }

    #[test]
    fn measures_conserve_input_row_count() {
        let schema = Schema::new(
            vec![Dimension::dense("a", 7), Dimension::dense("b", 5)],
            "m",
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw: Vec<Vec<i64>> = (0..1000)
            .map(|_| {
                vec![
                    rand::Rng::random_range(&mut rng, 0..7i64),
                    rand::Rng::random_range(&mut rng, 0..5i64),
                ]
            })
            .collect();
        let t = build_count_tensor(&schema, &raw, &["a", "b"]).unwrap();
        assert_eq!(t.total_measure(), 1000);
        assert!(t.rows().len() <= 35);
    }

    #[test]
    fn tensor_rejects_unknown_dimension_and_bad_values() {
        let schema = two_dim_schema();
        assert!(matches!(
            build_count_tensor(&schema, &[], &["nope"]),
            Err(DataError::UnknownDimension(_))
        ));
        let raw = vec![vec![0, 99]];
        assert!(matches!(
            build_count_tensor(&schema, &raw, &["age"]),
            Err(DataError::ValueOutOfDomain { .. })
        ));
    }

    fn dense_tensor(n: usize) -> CountTensor {
        let schema = Schema::new(vec![Dimension::dense("x", n)], "m").unwrap();
        let rows = (0..n)
            .map(|i| TensorRow {
                coords: vec![i as u32],
                measure: 1 + (i as u64 % 3),
            })
            .collect();
        CountTensor::from_rows(schema, rows)
    }

    #[test]
    fn split_sizes() {
        let t = dense_tensor(10);
        let cs = split_into_clusters(&t, 4, ClusterOrder::SortedByFirstDim).unwrap();
        let sizes: Vec<usize> = cs.clusters().iter().map(|c| c.rows.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let single = split_into_clusters(&t, 100, ClusterOrder::Insertion).unwrap();
        assert_eq!(single.len(), 1);
        assert!(split_into_clusters(&t, 0, ClusterOrder::Insertion).is_err());
    }

    #[test]
    fn split_partitions_rows() {
        let t = dense_tensor(1000);
        let cs = split_into_clusters(&t, 100, ClusterOrder::SortedByFirstDim).unwrap();
        assert_eq!(cs.len(), 10);
        let mut union: Vec<TensorRow> = cs
            .clusters()
            .iter()
            .flat_map(|c| c.rows.iter().cloned())
            .collect();
        union.sort_by(|a, b| a.coords.cmp(&b.coords));
        assert_eq!(union, t.rows().to_vec());
        // ids dense 0..N-1
        for (i, c) in cs.clusters().iter().enumerate() {
            assert_eq!(c.id, i);
        }
    }

    #[test]
    fn partition_even_and_deterministic() {
        let t = dense_tensor(400);
        let parts = partition_horizontal(&t, 4, 7).unwrap();
        assert!(parts.iter().all(|p| p.row_count() == 100));
        let again = partition_horizontal(&t, 4, 7).unwrap();
        assert_eq!(parts, again);
        let other_seed = partition_horizontal(&t, 4, 8).unwrap();
        assert_ne!(parts, other_seed);
        // n=1 keeps the tensor's rows (order is the shuffle's)
        let solo = partition_horizontal(&t, 1, 3).unwrap();
        let mut rows = solo[0].rows().to_vec();
        rows.sort_by(|a, b| a.coords.cmp(&b.coords));
        assert_eq!(rows, t.rows().to_vec());
        assert_ne!(solo[0], t);
        assert!(partition_horizontal(&t, 0, 1).is_err());
    }

    #[test]
    fn partition_union_is_identity_on_rows() {
        let t = dense_tensor(103);
        let parts = partition_horizontal(&t, 4, 99).unwrap();
        let sizes: Vec<usize> = parts.iter().map(|p| p.row_count()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 103);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut union: Vec<TensorRow> = parts
            .iter()
            .flat_map(|p| p.rows().iter().cloned())
            .collect();
        union.sort_by(|a, b| a.coords.cmp(&b.coords));
        assert_eq!(union, t.rows().to_vec());
        // the plan assigns every row exactly once
        let plan = plan_partition(&t, 4, 99).unwrap();
        assert_eq!(plan.assignment.len(), 103);
        assert!(plan.assignment.iter().all(|&p| p < 4));
    }

    #[test]
    fn query_validation() {
        assert!(RangeQuery::new(Aggregation::Count, vec![]).is_err());
        let bad = RangeQuery::new(
            Aggregation::Count,
            vec![("x".into(), Interval { lo: 5, hi: 2 })],
        );
        assert!(matches!(bad, Err(DataError::InvalidRange { .. })));
        let q = RangeQuery::new(
            Aggregation::Count,
            vec![("nope".into(), Interval { lo: 0, hi: 1 })],
        )
        .unwrap();
        let t = dense_tensor(4);
        assert!(q.bind(t.schema()).is_err());
    }

    #[test]
    fn evaluation_matches_linear_scan_oracle() {
        let t = dense_tensor(10_000);
        let cs = split_into_clusters(&t, 128, ClusterOrder::SortedByFirstDim).unwrap();
        for (agg, lo, hi) in [
            (Aggregation::Count, 0i64, 9_999i64),
            (Aggregation::Count, 1_234, 7_890),
            (Aggregation::Sum, 55, 667),
            (Aggregation::Count, 10_000, 20_000),
        ] {
            let q = RangeQuery::new(agg, vec![("x".into(), Interval { lo, hi })])
                .unwrap()
                .bind(t.schema())
                .unwrap();
            let got = evaluate_exact(&q, cs.clusters());
            // independent oracle: row-by-row filter over the raw tensor
            let oracle: f64 = t
                .rows()
                .iter()
                .filter(|r| (lo..=hi).contains(&(r.coords[0] as i64)))
                .map(|r| match agg {
                    Aggregation::Count => 1.0,
                    Aggregation::Sum => r.measure as f64,
                })
                .sum();
            assert_eq!(got, oracle);
            assert_eq!(evaluate_exact_seq(&q, cs.clusters()), oracle);
        }
    }

    #[test]
    fn empty_match_is_zero_and_full_scan_counts_rows() {
        let t = dense_tensor(100);
        let cs = split_into_clusters(&t, 7, ClusterOrder::Insertion).unwrap();
        let empty = RangeQuery::new(
            Aggregation::Count,
            vec![("x".into(), Interval { lo: 500, hi: 600 })],
        )
        .unwrap()
        .bind(t.schema())
        .unwrap();
        assert_eq!(evaluate_exact(&empty, cs.clusters()), 0.0);
        let full = RangeQuery::new(
            Aggregation::Count,
            vec![("x".into(), Interval { lo: 0, hi: 99 })],
        )
        .unwrap()
        .bind(t.schema())
        .unwrap();
        assert_eq!(evaluate_exact(&full, cs.clusters()), 100.0);
    }

    #[test]
    fn cluster_additivity() {
        let t = dense_tensor(500);
        let cs = split_into_clusters(&t, 37, ClusterOrder::SortedByFirstDim).unwrap();
        let q = RangeQuery::new(
            Aggregation::Sum,
            vec![("x".into(), Interval { lo: 100, hi: 400 })],
        )
        .unwrap()
        .bind(t.schema())
        .unwrap();
        let summed: f64 = cs
            .clusters()
            .iter()
            .map(|c| evaluate_on_cluster(&q, c))
            .sum();
        assert_eq!(summed, evaluate_exact(&q, cs.clusters()));
    }

    #[test]
    fn unit_sensitivity_of_one_individual() {
        // Adding one individual moves SUM by exactly 1 and COUNT by 0 or 1.
        let t = dense_tensor(50);
        let q_sum = RangeQuery::new(
            Aggregation::Sum,
            vec![("x".into(), Interval { lo: 0, hi: 49 })],
        )
        .unwrap()
        .bind(t.schema())
        .unwrap();
        let q_cnt = RangeQuery::new(
            Aggregation::Count,
            vec![("x".into(), Interval { lo: 0, hi: 49 })],
        )
        .unwrap()
        .bind(t.schema())
        .unwrap();
        let cs = split_into_clusters(&t, 10, ClusterOrder::Insertion).unwrap();
        let base_sum = evaluate_exact(&q_sum, cs.clusters());
        let base_cnt = evaluate_exact(&q_cnt, cs.clusters());

        // Bump one existing measure.
        let mut bumped = cs.clone();
        bumped.clusters[0].rows[0].measure += 1;
        assert_eq!(evaluate_exact(&q_sum, bumped.clusters()) - base_sum, 1.0);
        assert_eq!(evaluate_exact(&q_cnt, bumped.clusters()) - base_cnt, 0.0);
    }
}
