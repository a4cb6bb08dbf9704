//! A laboratory for noisy balance disclosure in payment channel networks (PCNs).
//!
//! The crate is organised bottom-up:
//!
//! - [`network`]: channels, balances, hop-count routing over public balances and
//!   transaction execution with noisy public updates.
//! - [`mechanism`]: trace distributions `D[Q|P]` for the all-or-nothing,
//!   alternating and i.i.d. noise mechanisms, plus the worst-case utility metric.
//! - [`privacy`]: path sets, path traces, the exact minimax privacy LP, constructed
//!   adversaries and closed-form privacy/utility evaluators.
//! - [`topology`]: synthetic graph generators, user-server builder, snapshot CSV
//!   I/O and snowball sampling.
//! - [`workload`]: transaction streams (Pareto / uniform / constant values,
//!   uniform or weighted endpoints, zero-valued refresh stream).
//! - [`sim`]: sequential simulation, deadlock detection, alleviation heuristics
//!   and replicated runs.

pub mod error;
pub mod mechanism;
pub mod network;
pub mod privacy;
pub mod seed;
pub mod sim;
pub mod topology;
pub mod workload;

pub use error::{Error, Result};
pub use mechanism::{MechanismKind, NoiseMechanism, TraceDistribution, TraceSource};
pub use network::{ChannelState, NetworkState, NodeId, OrientedEdge, Outcome, Path, RouteView, Transaction};
