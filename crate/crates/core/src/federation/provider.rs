//! The data-provider node: answers QUERY with a noisy summary, then answers
//! ALLOCATION with either a locally perturbed estimate or a masked secure
//! share. Raw rows never leave the node.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datamodel::{BoundQuery, ClusterId, ClusterSet, RangeQuery};
use crate::dpcore::{self, BudgetSplit};
use crate::metastore::{self, GlobalMeta, ProportionTable};
use crate::sampling::{
    self, ClusterReader, EstimateOutput, ReplacementMode, SamplingPlan,
};

use super::message::{MessageBody, ProtocolMessage};
use super::securesum::{MaskStream, PairwiseMasker};
use super::FederationError;

/// Per-node configuration; the budget split and smc flag are agreed
/// federation-wide for a run.
#[derive(Debug, Clone)]
pub struct ProviderConfig {
    pub provider_id: usize,
    pub n_min: usize,
    pub budget: BudgetSplit,
    pub smc_mode: bool,
    pub seed: u64,
    pub replacement: ReplacementMode,
}

struct QueryScratch {
    bound: BoundQuery,
    covered: Vec<ClusterId>,
    r_hat: Vec<f64>,
}

/// Instrumentation counters used by the speed-up and noise-accounting checks.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProviderStats {
    /// Cluster-row reads performed for the most recent completed query.
    pub last_query_reads: usize,
    /// Whether the most recent completed query took the exact fallback path.
    pub last_query_fallback: bool,
    /// Laplace perturbations applied to released estimates.
    pub release_noise_count: u64,
    /// Laplace perturbations applied to released summaries (two per query).
    pub summary_noise_count: u64,
    /// Magnitude of the most recent release perturbation.
    pub last_release_noise_abs: f64,
    /// Scale of the most recent release perturbation.
    pub last_release_noise_scale: f64,
}

pub struct ProviderNode {
    config: ProviderConfig,
    clusters: ClusterSet,
    meta: GlobalMeta,
    tables: Vec<ProportionTable>,
    rng: ChaCha8Rng,
    masker: Option<PairwiseMasker>,
    scratch: HashMap<u64, QueryScratch>,
    stats: ProviderStats,
}

impl ProviderNode {
    pub fn new(
        config: ProviderConfig,
        clusters: ClusterSet,
        meta: GlobalMeta,
        tables: Vec<ProportionTable>,
    ) -> ProviderNode {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        ProviderNode {
            config,
            clusters,
            meta,
            tables,
            rng,
            masker: None,
            scratch: HashMap::new(),
            stats: ProviderStats::default(),
        }
    }

    /// Builds metadata in place and constructs the node.
    pub fn from_clusters(config: ProviderConfig, clusters: ClusterSet) -> Result<ProviderNode, FederationError> {
        let (meta, tables) = metastore::build_metadata(&clusters, config.n_min)?;
        Ok(ProviderNode::new(config, clusters, meta, tables))
    }

    /// Installs the pairwise masking context for secure-aggregation mode.
    pub fn set_masker(&mut self, masker: PairwiseMasker) {
        self.masker = Some(masker);
    }

    pub fn provider_id(&self) -> usize {
        self.config.provider_id
    }

    pub fn stats(&self) -> ProviderStats {
        self.stats
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn clusters(&self) -> &ClusterSet {
        &self.clusters
    }

    /// The covered-set size the node would compute for a query, used by
    /// workload generators to pre-screen approximation triggers without
    /// spending budget.
    pub fn covered_count(&self, query: &RangeQuery) -> Result<usize, FederationError> {
        let bound = query.bind(self.clusters.schema())?;
        Ok(metastore::identify_cq(&bound, &self.meta).len())
    }

    pub fn n_min(&self) -> usize {
        self.config.n_min
    }

    /// Handles one protocol round, returning the reply message.
    pub fn handle(&mut self, msg: &ProtocolMessage) -> Result<ProtocolMessage, FederationError> {
        match &msg.body {
            MessageBody::Query { query, sr: _ } => self.handle_query(msg.query_id, query),
            MessageBody::Allocation { sample_size } => {
                self.handle_allocation(msg.query_id, *sample_size)
            }
            other => Err(FederationError::UnexpectedMessage {
                got: ProtocolMessage {
                    query_id: msg.query_id,
                    body: other.clone(),
                }
                .kind(),
                want: "QUERY or ALLOCATION",
            }),
        }
    }

    fn handle_query(
        &mut self,
        query_id: u64,
        query: &RangeQuery,
    ) -> Result<ProtocolMessage, FederationError> {
        let bound = query.bind(self.clusters.schema())?;
        let covered = metastore::identify_cq(&bound, &self.meta);
        let mut r_hat = Vec::with_capacity(covered.len());
        for &id in &covered {
            r_hat.push(metastore::approx_r(&bound, &self.tables[id])?);
        }
        let n_q = covered.len();
        let avg_r = if n_q == 0 {
            0.0
        } else {
            r_hat.iter().sum::<f64>() / n_q as f64
        };
        let delta_avg = dpcore::delta_avg_r(
            self.clusters.capacity(),
            bound.dims.len(),
            self.config.n_min,
        );
        let summary = crate::allocation::perturb_summary(
            self.config.provider_id,
            n_q,
            avg_r,
            self.config.budget.eps_o,
            delta_avg,
            &mut self.rng,
        )?;
        self.stats.summary_noise_count += 2;
        self.scratch.insert(
            query_id,
            QueryScratch {
                bound,
                covered,
                r_hat,
            },
        );
        Ok(ProtocolMessage {
            query_id,
            body: MessageBody::Summary {
                n_q_noisy: summary.n_q_noisy,
                avg_r_noisy: summary.avg_r_noisy,
            },
        })
    }

    fn handle_allocation(
        &mut self,
        query_id: u64,
        sample_size: u64,
    ) -> Result<ProtocolMessage, FederationError> {
        let scratch = self
            .scratch
            .remove(&query_id)
            .ok_or(FederationError::UnknownQueryId(query_id))?;
        let reader = ClusterReader::new(&self.clusters);
        let n_q = scratch.covered.len();

        // The approximation trigger is evaluated only now, after the
        // collaboration phase, so non-participation never leaks data size.
        let outcome = if n_q < self.config.n_min {
            self.stats.last_query_fallback = true;
            let exact: f64 = scratch
                .covered
                .iter()
                .map(|&id| reader.evaluate(&scratch.bound, id))
                .sum();
            FallbackOrEstimate::Fallback { exact }
        } else {
            self.stats.last_query_fallback = false;
            let s_local = (sample_size as usize).clamp(1, n_q);
            let plan = SamplingPlan::new(
                scratch.covered,
                scratch.r_hat,
                s_local,
                self.clusters.capacity(),
            )?;
            let selected = sampling::em_sampling(
                &plan,
                self.config.budget.eps_s,
                dpcore::delta_p(self.config.n_min),
                self.config.replacement,
                &mut self.rng,
            )?;
            let out = sampling::estimate_q(
                &scratch.bound,
                &selected,
                &plan,
                &reader,
                self.config.budget.eps_e,
                self.config.budget.delta,
                self.config.smc_mode,
                &mut self.rng,
            )?;
            if std::env::var_os("FEDAQP_TRACE").is_some() {
                let min_r = plan.r_hat.iter().cloned().fold(f64::MAX, f64::min);
                let min_p_sampled = selected
                    .iter()
                    .map(|&i| plan.probabilities[i])
                    .fold(f64::MAX, f64::min);
                eprintln!(
                    "trace provider={} q={} n_q={} s={} sum_r={:.4} min_r={:.3e} min_p_sampled={:.3e} est={:.1} avg_sens={:.3e}",
                    self.config.provider_id,
                    query_id,
                    n_q,
                    selected.len(),
                    plan.sum_r(),
                    min_r,
                    min_p_sampled,
                    out.estimate,
                    out.avg_sensitivity,
                );
            }
            FallbackOrEstimate::Estimate(out)
        };
        self.stats.last_query_reads = reader.reads();

        let body = match (self.config.smc_mode, outcome) {
            (false, FallbackOrEstimate::Fallback { exact }) => {
                let scale = 1.0 / self.config.budget.eps_e;
                let noisy = dpcore::laplace(exact, scale, &mut self.rng)?;
                self.stats.release_noise_count += 1;
                self.stats.last_release_noise_abs = (noisy - exact).abs();
                self.stats.last_release_noise_scale = scale;
                MessageBody::Result { dp_result: noisy }
            }
            (false, FallbackOrEstimate::Estimate(out)) => {
                self.stats.release_noise_count += 1;
                let released = out.dp_result.expect("plain mode releases locally");
                self.stats.last_release_noise_abs = (released - out.estimate).abs();
                self.stats.last_release_noise_scale =
                    2.0 * out.avg_sensitivity / self.config.budget.eps_e;
                MessageBody::Result { dp_result: released }
            }
            (true, outcome) => {
                let masker = self
                    .masker
                    .as_ref()
                    .ok_or(FederationError::MissingMasker)?;
                let (value, sensitivity) = match outcome {
                    // An exact local answer has unit sensitivity.
                    FallbackOrEstimate::Fallback { exact } => (exact, 1.0),
                    FallbackOrEstimate::Estimate(out) => (out.estimate, out.avg_sensitivity),
                };
                MessageBody::SecureShare {
                    masked_value: masker.mask(query_id, value, MaskStream::Value),
                    masked_sensitivity: masker.mask(query_id, sensitivity, MaskStream::Sensitivity),
                }
            }
        };
        Ok(ProtocolMessage { query_id, body })
    }
}

enum FallbackOrEstimate {
    Fallback { exact: f64 },
    Estimate(EstimateOutput),
}
