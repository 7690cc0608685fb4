//! Provider and aggregator nodes, the query lifecycle, the wire protocol, and
//! the additive-mask secure aggregation path.

mod aggregator;
mod message;
mod provider;
mod securesum;
mod tcp;

pub use aggregator::{
    Aggregator, AggregatorConfig, AggregatorStats, Direction, ObliviousMax, ProviderEndpoint,
    TranscriptEntry,
};
pub use message::{read_frame, write_frame, MessageBody, ProtocolMessage};
pub use provider::{ProviderConfig, ProviderNode, ProviderStats};
pub use securesum::{decode_fixed, encode_fixed, MaskStream, PairwiseMasker, SecureSumSession};
pub use tcp::{
    aggregator_from_config, provider_from_config, serve_aggregator, serve_provider, NodeConfig,
    NodeRole, PeerConfig, TcpEndpoint,
};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum FederationError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("encode: {0}")]
    Encode(String),
    #[error("connection closed by peer")]
    ConnectionClosed,
    #[error("unexpected message {got}, wanted {want}")]
    UnexpectedMessage {
        got: &'static str,
        want: &'static str,
    },
    #[error("unknown query id {0}")]
    UnknownQueryId(u64),
    #[error("secure session incomplete: {got} of {want} contributions")]
    IncompleteSession { got: usize, want: usize },
    #[error("secure-aggregation mode requires a masking context")]
    MissingMasker,
    #[error("secure-aggregation mode requires a session")]
    MissingSession,
    #[error("node config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] crate::datamodel::DataError),
    #[error(transparent)]
    Meta(#[from] crate::metastore::MetaError),
    #[error(transparent)]
    Sampling(#[from] crate::sampling::SamplingError),
    #[error(transparent)]
    Allocation(#[from] crate::allocation::AllocationError),
    #[error(transparent)]
    Dp(#[from] crate::dpcore::DpError),
    #[error(transparent)]
    Storage(#[from] crate::datamodel::StorageError),
}

/// An in-process provider endpoint: the aggregator calls the node directly.
pub struct InProcessEndpoint {
    node: ProviderNode,
}

impl InProcessEndpoint {
    pub fn new(node: ProviderNode) -> InProcessEndpoint {
        InProcessEndpoint { node }
    }

    pub fn node(&self) -> &ProviderNode {
        &self.node
    }

    pub fn node_mut(&mut self) -> &mut ProviderNode {
        &mut self.node
    }
}

impl ProviderEndpoint for InProcessEndpoint {
    fn provider_id(&self) -> usize {
        self.node.provider_id()
    }

    fn round(&mut self, msg: &ProtocolMessage) -> Result<ProtocolMessage, FederationError> {
        self.node.handle(msg)
    }
}

/// Wires provider nodes and an aggregator into an in-process federation,
/// installing the secure-aggregation session when smc mode is on.
pub fn build_in_process(
    config: AggregatorConfig,
    mut nodes: Vec<ProviderNode>,
) -> Aggregator<InProcessEndpoint> {
    if config.smc_mode {
        let session = SecureSumSession::from_master_seed(nodes.len(), config.seed ^ 0x5eca);
        for (i, node) in nodes.iter_mut().enumerate() {
            node.set_masker(session.masker(i));
        }
        let mut agg = Aggregator::new(
            config,
            nodes.into_iter().map(InProcessEndpoint::new).collect(),
        );
        agg.set_session(session);
        agg
    } else {
        Aggregator::new(
            config,
            nodes.into_iter().map(InProcessEndpoint::new).collect(),
        )
    }
}
