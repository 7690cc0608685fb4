//! Federated approximate range-query engine with end-to-end differential privacy.
//!
//! Independent data providers answer COUNT/SUM range queries over horizontally
//! partitioned count tensors. Queries are accelerated by metadata-driven
//! unequal-probability cluster sampling; every released value (summaries,
//! sampling choices, estimates) carries a differential-privacy guarantee.
//!
//! Module map:
//! - [`datamodel`]: tensors, clusters, range queries, exact evaluation.
//! - [`metastore`]: per-cluster proportion tables and min/max bounds.
//! - [`dpcore`]: mechanisms, sensitivity bounds, smooth sensitivity, budget accounting.
//! - [`sampling`]: pps probabilities, private cluster sampling, Hansen-Hurwitz estimation.
//! - [`allocation`]: noisy provider summaries and sample-size allocation.
//! - [`federation`]: aggregator/provider nodes, wire protocol, secure aggregation.
//!
//! The `parallel` feature (on by default) runs the data-parallel inner loops on
//! rayon; disabling it falls back to sequential implementations, which stay
//! exported as `*_seq` for benchmarking and as independent test oracles.

pub mod allocation;
pub mod datamodel;
pub mod dpcore;
pub mod federation;
pub mod metastore;
pub mod sampling;
