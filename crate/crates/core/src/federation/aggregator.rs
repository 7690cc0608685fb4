//! The aggregator: runs the query lifecycle against the provider endpoints,
//! charges the analyst's accountant once per query, and assembles the final
//! answer in plain or secure-aggregation mode.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::allocation::{self, ProviderSummary};
use crate::datamodel::RangeQuery;
use crate::dpcore::{self, Accountant, Budget, DpError, HpSplit};

use super::message::{MessageBody, ProtocolMessage};
use super::securesum::SecureSumSession;
use super::FederationError;

/// One provider as seen from the aggregator: two request/response rounds per
/// query. Implementations are in-process nodes or TCP connections.
pub trait ProviderEndpoint {
    fn provider_id(&self) -> usize;
    fn round(&mut self, msg: &ProtocolMessage) -> Result<ProtocolMessage, FederationError>;
}

/// Computes the maximum of the providers' shared sensitivities from their
/// masked shares. The bundled reference is [`SecureSumSession`], which unmasks
/// the sensitivity stream (and only that stream) at the aggregator.
pub trait ObliviousMax {
    fn max_sensitivity(&self, query_id: u64, shares: &[u64]) -> Result<f64, FederationError>;
}

impl ObliviousMax for SecureSumSession {
    fn max_sensitivity(&self, query_id: u64, shares: &[u64]) -> Result<f64, FederationError> {
        SecureSumSession::max_sensitivity(self, query_id, shares)
    }
}

#[derive(Debug, Clone)]
pub struct AggregatorConfig {
    /// Per-query budget, agreed federation-wide for a run.
    pub budget: Budget,
    pub hp: HpSplit,
    pub smc_mode: bool,
    pub seed: u64,
}

/// Direction tags for transcript entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// One QUERY envelope fanned out to every provider.
    Broadcast,
    ToProvider(usize),
    FromProvider(usize),
    ToAnalyst,
}

#[derive(Debug, Clone)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub message: ProtocolMessage,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AggregatorStats {
    /// Laplace perturbations applied by the aggregator itself (one per query
    /// in secure-aggregation mode, none in plain mode).
    pub release_noise_count: u64,
    /// Magnitude of the most recent aggregator-side perturbation.
    pub last_release_noise_abs: f64,
    /// Scale of the most recent aggregator-side perturbation.
    pub last_release_noise_scale: f64,
}

pub struct Aggregator<E: ProviderEndpoint> {
    config: AggregatorConfig,
    endpoints: Vec<E>,
    session: Option<SecureSumSession>,
    rng: ChaCha8Rng,
    next_query_id: u64,
    transcript: Option<Vec<TranscriptEntry>>,
    stats: AggregatorStats,
}

impl<E: ProviderEndpoint> Aggregator<E> {
    pub fn new(config: AggregatorConfig, endpoints: Vec<E>) -> Aggregator<E> {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Aggregator {
            config,
            endpoints,
            session: None,
            rng,
            next_query_id: 0,
            transcript: None,
            stats: AggregatorStats::default(),
        }
    }

    /// Installs the secure-aggregation session (required in smc mode).
    pub fn set_session(&mut self, session: SecureSumSession) {
        self.session = Some(session);
    }

    /// Starts recording protocol messages; returns previously recorded ones.
    pub fn record_transcript(&mut self) -> Vec<TranscriptEntry> {
        self.transcript.replace(Vec::new()).unwrap_or_default()
    }

    pub fn take_transcript(&mut self) -> Vec<TranscriptEntry> {
        self.transcript.take().unwrap_or_default()
    }

    pub fn stats(&self) -> AggregatorStats {
        self.stats
    }

    pub fn endpoints(&self) -> &[E] {
        &self.endpoints
    }

    pub fn endpoints_mut(&mut self) -> &mut [E] {
        &mut self.endpoints
    }

    pub fn config(&self) -> &AggregatorConfig {
        &self.config
    }

    fn record(&mut self, direction: Direction, message: &ProtocolMessage) {
        if let Some(t) = self.transcript.as_mut() {
            t.push(TranscriptEntry {
                direction,
                message: message.clone(),
            });
        }
    }

    /// Runs the full lifecycle for one query: charge the accountant (once,
    /// regardless of provider count), broadcast the query, collect summaries,
    /// allocate, collect results or secure shares, and release the answer.
    ///
    /// Any provider failure aborts the query with a REFUSAL; the budget stays
    /// charged, so refusals can never be used to probe for free.
    pub fn handle_query(
        &mut self,
        query: &RangeQuery,
        sr: f64,
        accountant: &mut Accountant,
    ) -> ProtocolMessage {
        let query_id = self.next_query_id;
        self.next_query_id += 1;
        if let Err(e) = accountant.charge(&self.config.budget) {
            let refusal = ProtocolMessage {
                query_id,
                body: MessageBody::Refusal {
                    reason: e.to_string(),
                },
            };
            self.record(Direction::ToAnalyst, &refusal);
            return refusal;
        }
        match self.run_lifecycle(query_id, query, sr) {
            Ok(answer) => answer,
            Err(e) => {
                let refusal = ProtocolMessage {
                    query_id,
                    body: MessageBody::Refusal {
                        reason: format!("query aborted: {e}"),
                    },
                };
                self.record(Direction::ToAnalyst, &refusal);
                refusal
            }
        }
    }

    fn run_lifecycle(
        &mut self,
        query_id: u64,
        query: &RangeQuery,
        sr: f64,
    ) -> Result<ProtocolMessage, FederationError> {
        let query_msg = ProtocolMessage {
            query_id,
            body: MessageBody::Query {
                query: query.clone(),
                sr,
            },
        };
        self.record(Direction::Broadcast, &query_msg);

        let mut summaries = Vec::with_capacity(self.endpoints.len());
        for i in 0..self.endpoints.len() {
            let reply = self.endpoints[i].round(&query_msg)?;
            let provider_id = self.endpoints[i].provider_id();
            self.record(Direction::FromProvider(provider_id), &reply);
            match reply.body {
                MessageBody::Summary {
                    n_q_noisy,
                    avg_r_noisy,
                } => summaries.push(ProviderSummary {
                    provider_id,
                    n_q_noisy,
                    avg_r_noisy,
                }),
                _ => {
                    return Err(FederationError::UnexpectedMessage {
                        got: reply.kind(),
                        want: "SUMMARY",
                    })
                }
            }
        }

        let allocation = allocation::solve_allocation(&summaries, sr)?;

        let split = self.config.budget.split(&self.config.hp);
        let mut plain_sum = 0.0f64;
        let mut value_shares = Vec::new();
        let mut sens_shares = Vec::new();
        for i in 0..self.endpoints.len() {
            let alloc_msg = ProtocolMessage {
                query_id,
                body: MessageBody::Allocation {
                    sample_size: allocation.sample_sizes[i],
                },
            };
            let provider_id = self.endpoints[i].provider_id();
            self.record(Direction::ToProvider(provider_id), &alloc_msg);
            let reply = self.endpoints[i].round(&alloc_msg)?;
            self.record(Direction::FromProvider(provider_id), &reply);
            match reply.body {
                MessageBody::Result { dp_result } if !self.config.smc_mode => {
                    plain_sum += dp_result;
                }
                MessageBody::SecureShare {
                    masked_value,
                    masked_sensitivity,
                } if self.config.smc_mode => {
                    value_shares.push(masked_value);
                    sens_shares.push(masked_sensitivity);
                }
                _ => {
                    return Err(FederationError::UnexpectedMessage {
                        got: reply.kind(),
                        want: if self.config.smc_mode {
                            "SECURE_SHARE"
                        } else {
                            "RESULT"
                        },
                    })
                }
            }
        }

        let value = if self.config.smc_mode {
            let session = self.session.as_ref().ok_or(FederationError::MissingSession)?;
            let sum = session.sum(&value_shares)?;
            let max_sens = ObliviousMax::max_sensitivity(session, query_id, &sens_shares)?;
            let eps_e = split.eps_e;
            if eps_e.is_nan() || eps_e <= 0.0 {
                return Err(FederationError::Dp(DpError::InvalidEpsilon(eps_e)));
            }
            let scale = 2.0 * max_sens / eps_e;
            let noisy = dpcore::laplace(sum, scale, &mut self.rng)?;
            self.stats.release_noise_count += 1;
            self.stats.last_release_noise_abs = (noisy - sum).abs();
            self.stats.last_release_noise_scale = scale;
            noisy
        } else {
            plain_sum
        };

        let answer = ProtocolMessage {
            query_id,
            body: MessageBody::Answer {
                value,
                epsilon_spent: self.config.budget.epsilon(),
                delta_spent: self.config.budget.delta(),
            },
        };
        self.record(Direction::ToAnalyst, &answer);
        Ok(answer)
    }
}
