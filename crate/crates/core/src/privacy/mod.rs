//! Privacy analytics: path sets, the minimax privacy LP, constructed adversaries
//! and closed-form privacy/utility tradeoffs.

pub mod adversary;
pub mod closed_form;
pub mod lp;
pub mod paths;
mod simplex;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanism::TraceSource;
use crate::network::{NodeId, OrientedEdge, Path};

pub use adversary::{make_adversary, AdversaryContext, AdversaryKind, UserServerLayout};
pub use lp::{privacy_lp, privacy_lp_with, LpOptions};
pub use paths::{
    enumerate_paths, is_reachable, trace_endpoints, user_server_closure, user_server_closure_violation, PathPolicy,
};

/// A canonical path trace: sorted, deduplicated oriented edges.
pub type Trace = Vec<OrientedEdge>;

/// Guess distributions A[·|Q], one per observed trace. Each distribution is
/// stored sparsely and sums to one over the node set.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AdversaryStrategy {
    node_count: usize,
    guesses: BTreeMap<Trace, Vec<(NodeId, f64)>>,
}

impl AdversaryStrategy {
    pub fn new(node_count: usize) -> Self {
        AdversaryStrategy {
            node_count,
            guesses: BTreeMap::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Sets A[·|trace]; weights for the same node are merged.
    pub fn set(&mut self, trace: Trace, guess: impl IntoIterator<Item = (NodeId, f64)>) -> Result<()> {
        let mut merged: BTreeMap<NodeId, f64> = BTreeMap::new();
        for (v, p) in guess {
            if v >= self.node_count {
                return Err(Error::contract(format!("guess names node {v} outside 0..{}", self.node_count)));
            }
            if !(p >= -1e-12) {
                return Err(Error::contract(format!("negative guess probability {p}")));
            }
            *merged.entry(v).or_insert(0.0) += p.max(0.0);
        }
        let total: f64 = merged.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("guess probabilities sum to {total}")));
        }
        self.guesses
            .insert(trace, merged.into_iter().filter(|e| e.1 > 0.0).collect());
        Ok(())
    }

    pub fn set_uniform(&mut self, trace: Trace) {
        let p = 1.0 / self.node_count as f64;
        self.guesses
            .insert(trace, (0..self.node_count).map(|v| (v, p)).collect());
    }

    /// Uniform over `nodes` (deduplicated).
    pub fn set_uniform_over(&mut self, trace: Trace, nodes: &[NodeId]) -> Result<()> {
        let set: BTreeSet<NodeId> = nodes.iter().copied().collect();
        if set.is_empty() {
            return Err(Error::contract("uniform guess over an empty node set"));
        }
        let p = 1.0 / set.len() as f64;
        self.set(trace, set.into_iter().map(|v| (v, p)))
    }

    pub fn guess(&self, trace: &[OrientedEdge]) -> Option<&[(NodeId, f64)]> {
        self.guesses.get(trace).map(|g| g.as_slice())
    }

    pub fn prob(&self, trace: &[OrientedEdge], node: NodeId) -> f64 {
        self.guess(trace)
            .and_then(|g| g.iter().find(|e| e.0 == node))
            .map_or(0.0, |e| e.1)
    }

    pub fn traces(&self) -> impl Iterator<Item = &Trace> {
        self.guesses.keys()
    }

    pub fn len(&self) -> usize {
        self.guesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.guesses.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", content = "tolerance", rename_all = "snake_case")]
pub enum LpStatus {
    /// The value was determined without floating-point pivoting.
    Exact,
    /// Solved in double precision; carries the certified primal/dual gap.
    Numeric(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct PrivacyResult {
    pub privacy: f64,
    pub optimal_adversary: AdversaryStrategy,
    pub lp_status: LpStatus,
    pub stats: LpStats,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LpStats {
    pub paths: usize,
    pub traces: usize,
    pub rows: usize,
    pub columns: usize,
    pub pivots: usize,
    /// Node transpositions found to leave the instance invariant.
    pub symmetries: usize,
}

/// Every trace the source can emit on the given paths, plus the empty trace.
pub fn support_traces<S: TraceSource + ?Sized>(source: &S, paths: &[Path]) -> Result<BTreeSet<Trace>> {
    let mut out = BTreeSet::from([Vec::new()]);
    for p in paths {
        for (q, prob) in source.trace_distribution(p)? {
            if prob > 0.0 {
                out.insert(q);
            }
        }
    }
    Ok(out)
}

/// Per-path hit probability Σ_Q D[Q|P]·A[∂P|Q] of a fixed strategy.
pub fn hit_probabilities<S: TraceSource + ?Sized>(
    source: &S,
    paths: &[Path],
    strategy: &AdversaryStrategy,
) -> Result<Vec<f64>> {
    paths
        .iter()
        .map(|p| {
            let (s, d) = (p.source(), p.destination());
            let mut hit = 0.0;
            for (q, prob) in source.trace_distribution(p)? {
                if prob == 0.0 {
                    continue;
                }
                let g = strategy.guess(&q).ok_or_else(|| {
                    Error::contract(format!("strategy has no guess for trace {}", paths::fmt_trace(&q)))
                })?;
                let a: f64 = g.iter().filter(|e| e.0 == s || e.0 == d).map(|e| e.1).sum();
                hit += prob * a;
            }
            Ok(hit)
        })
        .collect()
}

/// The worst-case (over paths) probability that `strategy` names an endpoint.
/// For every strategy, privacy <= 1 - adversary_success.
pub fn adversary_success<S: TraceSource + ?Sized>(
    source: &S,
    paths: &[Path],
    strategy: &AdversaryStrategy,
) -> Result<f64> {
    if paths.is_empty() {
        return Err(Error::contract("adversary success over an empty path set"));
    }
    Ok(hit_probabilities(source, paths, strategy)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}
