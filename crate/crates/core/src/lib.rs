//! Sharding-strategy planner and collective-communication simulator for
//! data-parallel LLM training.
//!
//! The crate covers the full pipeline from strategy selection to numeric
//! verification:
//!
//! - [`types`]: shard levels, strategy codes, cluster/model/network specs;
//! - [`strategy`]: the 27-strategy space, pruning principles and the
//!   recommendation matrix;
//! - [`costmodel`]: per-GPU memory, per-stage communication volumes, the
//!   gradient-accumulation saving and a two-tier time model;
//! - [`schedule`]: per-iteration collective plans for any strategy;
//! - [`netsim`]: round-synchronous simulation of ring, hierarchical-ring
//!   and hierarchical-overlapping-ring collectives on real buffers;
//! - [`trainsim`]: end-to-end training equivalence against a single-process
//!   baseline;
//! - [`report`]: machine-readable reports shared by the CLI and FFI.

pub mod costmodel;
pub mod netsim;
pub mod report;
pub mod schedule;
pub mod strategy;
pub mod trainsim;
pub mod types;

pub use costmodel::Method;
pub use types::{ClusterSpec, Error, ModelSpec, NetworkSpec, Regime, Result, ShardLevel, Strategy};
