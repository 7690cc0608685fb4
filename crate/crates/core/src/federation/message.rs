//! The wire protocol: length-prefixed, self-describing JSON envelopes.
//!
//! Each frame is the ASCII decimal byte length of the record, a newline, and
//! the record itself. Payloads never carry row-level data; the only fields
//! are the ones spelled out per message type below.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::datamodel::RangeQuery;

use super::FederationError;

/// Maximum accepted frame size; queries and scalars fit in well under this.
const MAX_FRAME_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub query_id: u64,
    #[serde(flatten)]
    pub body: MessageBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageBody {
    /// Aggregator -> providers: the query and the requested sampling rate.
    Query { query: RangeQuery, sr: f64 },
    /// Provider -> aggregator: noisy covered-cluster count and noisy average
    /// matching proportion.
    Summary { n_q_noisy: u64, avg_r_noisy: f64 },
    /// Aggregator -> provider: the sample size this provider should draw.
    Allocation { sample_size: u64 },
    /// Provider -> aggregator: locally perturbed estimate (plain mode).
    Result { dp_result: f64 },
    /// Provider -> aggregator: masked fixed-point estimate and sensitivity
    /// (secure-aggregation mode).
    SecureShare {
        masked_value: u64,
        masked_sensitivity: u64,
    },
    /// Aggregator -> analyst: the released value and the budget it consumed.
    Answer {
        value: f64,
        epsilon_spent: f64,
        delta_spent: f64,
    },
    /// Aggregator -> analyst: the query was not answered.
    Refusal { reason: String },
}

impl ProtocolMessage {
    pub fn kind(&self) -> &'static str {
        match self.body {
            MessageBody::Query { .. } => "QUERY",
            MessageBody::Summary { .. } => "SUMMARY",
            MessageBody::Allocation { .. } => "ALLOCATION",
            MessageBody::Result { .. } => "RESULT",
            MessageBody::SecureShare { .. } => "SECURE_SHARE",
            MessageBody::Answer { .. } => "ANSWER",
            MessageBody::Refusal { .. } => "REFUSAL",
        }
    }
}

/// Writes one length-prefixed frame.
pub fn write_frame<W: Write>(writer: &mut W, msg: &ProtocolMessage) -> Result<(), FederationError> {
    let body = serde_json::to_vec(msg).map_err(|e| FederationError::Encode(e.to_string()))?;
    writer
        .write_all(format!("{}\n", body.len()).as_bytes())
        .and_then(|_| writer.write_all(&body))
        .and_then(|_| writer.flush())
        .map_err(FederationError::from)
}

/// Reads one length-prefixed frame.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<ProtocolMessage, FederationError> {
    let mut len_buf = Vec::with_capacity(16);
    let mut byte = [0u8; 1];
    loop {
        let n = reader.read(&mut byte)?;
        if n == 0 {
            return Err(FederationError::ConnectionClosed);
        }
        if byte[0] == b'\n' {
            break;
        }
        if !byte[0].is_ascii_digit() || len_buf.len() > 12 {
            return Err(FederationError::Encode("malformed frame length".into()));
        }
        len_buf.push(byte[0]);
    }
    let len: usize = std::str::from_utf8(&len_buf)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| FederationError::Encode("malformed frame length".into()))?;
    if len > MAX_FRAME_BYTES {
        return Err(FederationError::Encode(format!("frame of {len} bytes refused")));
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body)?;
    serde_json::from_slice(&body).map_err(|e| FederationError::Encode(e.to_string()))
}
