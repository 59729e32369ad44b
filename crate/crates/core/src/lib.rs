//! Tiered KV-cache planning toolkit.
//!
//! - [`trace`]: request traces, synthetic generation and workload analysis.
//! - [`prefix_index`]: radix tree over block-hash chains and subtree groups.
//! - [`tiered_store`]: DRAM/disk residency with LRU + TTL eviction and I/O channels.
//! - [`engine_sim`]: discrete-event engine simulator producing a [`engine_sim::SimReport`].
//! - [`cost_model`]: compute plus piecewise tiered resource pricing.
//! - [`pareto_search`]: dominance filter, hypervolume, grid and adaptive search.
//! - [`ttl_alloc`]: per-group TTL allocation under a storage budget.

// Negated float comparisons are how validation rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod trace;
pub mod prefix_index;
pub mod tiered_store;
pub mod engine_sim;
pub mod cost_model;
pub mod pareto_search;
pub mod ttl_alloc;
