//! TCP transport: length-prefixed protocol frames over stream sockets, plus
//! the node configuration file that wires a federation together.

use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::datamodel::load_provider;
use crate::dpcore::{Accountant, Budget, HpSplit, Ratio};
use crate::metastore;
use crate::sampling::ReplacementMode;

use super::aggregator::{Aggregator, AggregatorConfig, ProviderEndpoint};
use super::message::{read_frame, write_frame, MessageBody, ProtocolMessage};
use super::provider::{ProviderConfig, ProviderNode};
use super::securesum::SecureSumSession;
use super::FederationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Provider,
    Aggregator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeerConfig {
    pub provider_id: usize,
    pub addr: String,
}

/// On-disk node configuration (JSON). Budgets are decimal strings so they
/// compose exactly in the accountant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeConfig {
    pub role: NodeRole,
    pub listen: String,
    /// Dense provider index; required for providers.
    #[serde(default)]
    pub provider_id: Option<usize>,
    /// Total providers in the federation (for mask derivation).
    #[serde(default)]
    pub provider_count: Option<usize>,
    /// Aggregator: the provider endpoints to dial.
    #[serde(default)]
    pub peers: Vec<PeerConfig>,
    #[serde(default = "default_n_min")]
    pub n_min: usize,
    /// Epsilon split across summary/sampling/estimate steps.
    #[serde(default = "default_hp")]
    pub hp: [String; 3],
    #[serde(default)]
    pub smc_mode: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Per-query budget, agreed across the federation for a run.
    pub epsilon: String,
    pub delta: String,
    /// Analyst total budget (aggregator only).
    #[serde(default)]
    pub xi: Option<String>,
    #[serde(default)]
    pub psi: Option<String>,
    /// Provider data directory (cluster rows + manifest).
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    /// Provider metadata directory; defaults to `data_dir`.
    #[serde(default)]
    pub meta_dir: Option<PathBuf>,
    /// Shared secret from which pairwise mask seeds derive in smc mode.
    #[serde(default)]
    pub session_master_seed: u64,
}

fn default_n_min() -> usize {
    10
}

fn default_hp() -> [String; 3] {
    ["0.1".into(), "0.1".into(), "0.8".into()]
}

fn default_timeout() -> u64 {
    30
}

impl NodeConfig {
    pub fn from_file(path: &Path) -> Result<NodeConfig, FederationError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| FederationError::Config(e.to_string()))
    }

    pub fn budget(&self) -> Result<Budget, FederationError> {
        Budget::parse(&self.epsilon, &self.delta).map_err(FederationError::from)
    }

    pub fn hp_split(&self) -> Result<HpSplit, FederationError> {
        HpSplit::parse(&self.hp[0], &self.hp[1], &self.hp[2]).map_err(FederationError::from)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

/// Builds a provider node from its config, loading clusters from `data_dir`
/// and metadata from `meta_dir` (building and saving it when absent).
pub fn provider_from_config(cfg: &NodeConfig) -> Result<ProviderNode, FederationError> {
    let provider_id = cfg
        .provider_id
        .ok_or_else(|| FederationError::Config("provider requires provider_id".into()))?;
    let data_dir = cfg
        .data_dir
        .as_ref()
        .ok_or_else(|| FederationError::Config("provider requires data_dir".into()))?;
    let clusters = load_provider(data_dir)?;
    let meta_dir = cfg.meta_dir.as_ref().unwrap_or(data_dir);
    let (meta, tables) = match metastore::load_metadata(meta_dir) {
        Ok(loaded) => loaded,
        Err(_) => {
            let built = metastore::build_metadata(&clusters, cfg.n_min)?;
            metastore::save_metadata(meta_dir, &built.0, &built.1)?;
            built
        }
    };
    let split = cfg.budget()?.split(&cfg.hp_split()?);
    let config = ProviderConfig {
        provider_id,
        n_min: cfg.n_min,
        budget: split,
        smc_mode: cfg.smc_mode,
        seed: cfg.seed,
        replacement: ReplacementMode::WithoutReplacement,
    };
    let mut node = ProviderNode::new(config, clusters, meta, tables);
    if cfg.smc_mode {
        let count = cfg.provider_count.ok_or_else(|| {
            FederationError::Config("smc mode requires provider_count".into())
        })?;
        let session = SecureSumSession::from_master_seed(count, cfg.session_master_seed);
        node.set_masker(session.masker(provider_id));
    }
    Ok(node)
}

/// A provider reached over TCP; one framed request/response per round.
pub struct TcpEndpoint {
    provider_id: usize,
    stream: TcpStream,
}

impl TcpEndpoint {
    pub fn connect(
        provider_id: usize,
        addr: &str,
        timeout: Duration,
    ) -> Result<TcpEndpoint, FederationError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        Ok(TcpEndpoint {
            provider_id,
            stream,
        })
    }
}

impl ProviderEndpoint for TcpEndpoint {
    fn provider_id(&self) -> usize {
        self.provider_id
    }

    fn round(&mut self, msg: &ProtocolMessage) -> Result<ProtocolMessage, FederationError> {
        write_frame(&mut self.stream, msg)?;
        read_frame(&mut self.stream)
    }
}

/// Builds the aggregator side from config: dials every peer and prepares the
/// analyst accountant from the (xi, psi) totals.
pub fn aggregator_from_config(
    cfg: &NodeConfig,
) -> Result<(Aggregator<TcpEndpoint>, Accountant), FederationError> {
    let mut endpoints = Vec::with_capacity(cfg.peers.len());
    for peer in &cfg.peers {
        endpoints.push(TcpEndpoint::connect(
            peer.provider_id,
            &peer.addr,
            cfg.timeout(),
        )?);
    }
    let config = AggregatorConfig {
        budget: cfg.budget()?,
        hp: cfg.hp_split()?,
        smc_mode: cfg.smc_mode,
        seed: cfg.seed,
    };
    let mut aggregator = Aggregator::new(config, endpoints);
    if cfg.smc_mode {
        aggregator.set_session(SecureSumSession::from_master_seed(
            cfg.peers.len(),
            cfg.session_master_seed,
        ));
    }
    let xi = cfg
        .xi
        .as_deref()
        .map(Ratio::parse_decimal)
        .transpose()?
        .unwrap_or(Ratio::from_int(i64::MAX));
    let psi = cfg
        .psi
        .as_deref()
        .map(Ratio::parse_decimal)
        .transpose()?
        .unwrap_or(Ratio::ONE);
    Ok((aggregator, Accountant::sequential(xi, psi)))
}

/// Serves one provider node forever: connections are handled serially, one
/// framed request at a time, until the listener fails.
pub fn serve_provider(
    listener: TcpListener,
    mut node: ProviderNode,
    timeout: Duration,
) -> Result<(), FederationError> {
    for stream in listener.incoming() {
        let mut stream = stream?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        loop {
            let msg = match read_frame(&mut stream) {
                Ok(m) => m,
                Err(FederationError::ConnectionClosed) => break,
                Err(e) => return Err(e),
            };
            let reply = match node.handle(&msg) {
                Ok(r) => r,
                Err(e) => ProtocolMessage {
                    query_id: msg.query_id,
                    body: MessageBody::Refusal {
                        reason: e.to_string(),
                    },
                },
            };
            write_frame(&mut stream, &reply)?;
        }
    }
    Ok(())
}

/// Serves analysts forever: each QUERY frame runs the full lifecycle against
/// the connected providers and returns ANSWER or REFUSAL.
pub fn serve_aggregator(
    listener: TcpListener,
    mut aggregator: Aggregator<TcpEndpoint>,
    mut accountant: Accountant,
    timeout: Duration,
) -> Result<(), FederationError> {
    for stream in listener.incoming() {
        let mut stream = stream?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        loop {
            let msg = match read_frame(&mut stream) {
                Ok(m) => m,
                Err(FederationError::ConnectionClosed) => break,
                Err(e) => return Err(e),
            };
            let reply = match msg.body {
                MessageBody::Query { ref query, sr } => {
                    aggregator.handle_query(query, sr, &mut accountant)
                }
                _ => ProtocolMessage {
                    query_id: msg.query_id,
                    body: MessageBody::Refusal {
                        reason: "expected QUERY".into(),
                    },
                },
            };
            write_frame(&mut stream, &reply)?;
        }
    }
    Ok(())
}
