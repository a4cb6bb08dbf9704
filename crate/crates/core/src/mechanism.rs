//! Noise mechanisms: the conditional distribution D[Q|P] of which path edges get
//! their public balance refreshed after a successful transaction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NodeId, OrientedEdge, Path};

/// Largest path length for which the i.i.d. mechanism is enumerated (2^L atoms).
pub const IID_ENUMERATION_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    #[serde(rename = "aon")]
    AllOrNothing,
    Alternating,
    Iid,
}

impl MechanismKind {
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::AllOrNothing => "aon",
            MechanismKind::Alternating => "alternating",
            MechanismKind::Iid => "iid",
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A distribution over subsets of a path's edges, with subsets given as sorted
/// 0-based edge positions. Zero-probability atoms are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceDistribution {
    path_len: usize,
    entries: Vec<(Vec<usize>, f64)>,
}

impl TraceDistribution {
    /// Builds a distribution, merging repeated subsets and dropping zero atoms.
    pub fn new(path_len: usize, atoms: impl IntoIterator<Item = (Vec<usize>, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (mut q, p) in atoms {
            if !(p >= 0.0) {
                return Err(Error::contract(format!("negative or NaN probability {p}")));
            }
            q.sort_unstable();
            q.dedup();
            if q.last().is_some_and(|&i| i >= path_len) {
                return Err(Error::contract(format!(
                    "trace position outside a path of length {path_len}"
                )));
            }
            *merged.entry(q).or_insert(0.0) += p;
        }
        let total: f64 = merged.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("trace probabilities sum to {total}")));
        }
        let entries = merged.into_iter().filter(|(_, p)| *p > 0.0).collect();
        Ok(TraceDistribution { path_len, entries })
    }

    pub fn path_len(&self) -> usize {
        self.path_len
    }

    pub fn entries(&self) -> &[(Vec<usize>, f64)] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Probability that edge position `pos` is refreshed.
    pub fn marginal(&self, pos: usize) -> f64 {
        self.entries
            .iter()
            .filter(|(q, _)| q.binary_search(&pos).is_ok())
            .map(|e| e.1)
            .sum()
    }

    /// Probability of a specific subset (positions in any order).
    pub fn prob_of(&self, positions: &[usize]) -> f64 {
        let mut q = positions.to_vec();
        q.sort_unstable();
        self.entries
            .iter()
            .find(|(x, _)| *x == q)
            .map_or(0.0, |e| e.1)
    }

    /// The same distribution over canonical (sorted) oriented-edge traces of `path`.
    pub fn on_path(&self, path: &Path) -> Vec<(Vec<OrientedEdge>, f64)> {
        debug_assert_eq!(path.len(), self.path_len);
        self.entries
            .iter()
            .map(|(q, p)| (canonical_trace(q.iter().map(|&i| path.edge(i))), *p))
            .collect()
    }
}

/// Sorts and dedups a set of oriented edges into the form used as a trace key.
pub fn canonical_trace(edges: impl IntoIterator<Item = OrientedEdge>) -> Vec<OrientedEdge> {
    let mut v: Vec<OrientedEdge> = edges.into_iter().collect();
    v.sort_unstable();
    v.dedup();
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseMechanism {
    kind: MechanismKind,
    alpha: f64,
}

fn odd_positions(len: usize) -> Vec<usize> {
    (0..len).step_by(2).collect()
}

fn even_positions(len: usize) -> Vec<usize> {
    (1..len).step_by(2).collect()
}

impl NoiseMechanism {
    pub fn new(kind: MechanismKind, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::domain(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(NoiseMechanism { kind, alpha })
    }

    pub fn all_or_nothing(alpha: f64) -> Result<Self> {
        Self::new(MechanismKind::AllOrNothing, alpha)
    }

    pub fn alternating(alpha: f64) -> Result<Self> {
        Self::new(MechanismKind::Alternating, alpha)
    }

    pub fn iid(alpha: f64) -> Result<Self> {
        Self::new(MechanismKind::Iid, alpha)
    }

    pub fn kind(&self) -> MechanismKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// D[·|P] for a path with `len` edges.
    pub fn distribution(&self, len: usize) -> Result<TraceDistribution> {
        if len == 0 {
            return Err(Error::contract("empty path"));
        }
        let a = self.alpha;
        let all: Vec<usize> = (0..len).collect();
        match self.kind {
            MechanismKind::AllOrNothing => TraceDistribution::new(len, [(vec![], 1.0 - a), (all, a)]),
            MechanismKind::Alternating => {
                if len < 2 {
                    return Err(Error::contract("alternating mechanism needs paths of length >= 2"));
                }
                let (odd, even) = (odd_positions(len), even_positions(len));
                if a <= 0.5 {
                    TraceDistribution::new(len, [(odd, a), (even, a), (vec![], 1.0 - 2.0 * a)])
                } else {
                    TraceDistribution::new(len, [(odd, 1.0 - a), (even, 1.0 - a), (all, 2.0 * a - 1.0)])
                }
            }
            MechanismKind::Iid => {
                if len > IID_ENUMERATION_CAP {
                    return Err(Error::SizeCap {
                        what: "i.i.d. enumeration path length",
                        actual: len,
                        limit: IID_ENUMERATION_CAP,
                    });
                }
                let atoms = (0u32..1 << len).map(|mask| {
                    let q: Vec<usize> = (0..len).filter(|i| mask >> i & 1 == 1).collect();
                    let k = q.len() as i32;
                    (q, a.powi(k) * (1.0 - a).powi(len as i32 - k))
                });
                TraceDistribution::new(len, atoms)
            }
        }
    }

    /// Draws the refreshed edge positions for a path of `len` edges.
    ///
    /// The alternating mechanism is also sampled on single-edge paths, where
    /// the "even" group is empty; each edge is still refreshed with probability alpha.
    pub fn sample_positions<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let a = self.alpha;
        match self.kind {
            MechanismKind::AllOrNothing => {
                if rng.random::<f64>() < a {
                    (0..len).collect()
                } else {
                    Vec::new()
                }
            }
            MechanismKind::Alternating => {
                let u = rng.random::<f64>();
                if a <= 0.5 {
                    if u < a {
                        odd_positions(len)
                    } else if u < 2.0 * a {
                        even_positions(len)
                    } else {
                        Vec::new()
                    }
                } else if u < 1.0 - a {
                    odd_positions(len)
                } else if u < 2.0 * (1.0 - a) {
                    even_positions(len)
                } else {
                    (0..len).collect()
                }
            }
            MechanismKind::Iid => (0..len).filter(|_| rng.random::<f64>() < a).collect(),
        }
    }
}

impl fmt::Display for NoiseMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(alpha={})", self.kind, self.alpha)
    }
}

/// Anything that yields a trace distribution per path; the privacy LP and the
/// utility metric are written against this.
pub trait TraceSource: Sync {
    /// D[·|P] over canonical oriented-edge traces.
    fn trace_distribution(&self, path: &Path) -> Result<Vec<(Vec<OrientedEdge>, f64)>>;

    /// Edges of `path` that count toward utility. Defaults to all of them.
    fn utility_edges(&self, path: &Path) -> Vec<OrientedEdge> {
        path.edges().collect()
    }
}

impl TraceSource for NoiseMechanism {
    fn trace_distribution(&self, path: &Path) -> Result<Vec<(Vec<OrientedEdge>, f64)>> {
        Ok(self.distribution(path.len())?.on_path(path))
    }
}

/// Wraps a mechanism so that some channels are never published (e.g. user-server
/// links). Hidden edges are removed from every trace and do not count toward utility.
pub struct EdgeHiding<M> {
    inner: M,
    hidden: BTreeSet<(NodeId, NodeId)>,
}

impl<M: TraceSource> EdgeHiding<M> {
    /// `hidden` lists unordered channels; both orientations are hidden.
    pub fn new(inner: M, hidden: impl IntoIterator<Item = (NodeId, NodeId)>) -> Self {
        let hidden = hidden.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        EdgeHiding { inner, hidden }
    }

    fn is_hidden(&self, e: OrientedEdge) -> bool {
        self.hidden.contains(&(e.from.min(e.to), e.from.max(e.to)))
    }
}

impl<M: TraceSource> TraceSource for EdgeHiding<M> {
    fn trace_distribution(&self, path: &Path) -> Result<Vec<(Vec<OrientedEdge>, f64)>> {
        let mut merged: BTreeMap<Vec<OrientedEdge>, f64> = BTreeMap::new();
        for (q, p) in self.inner.trace_distribution(path)? {
            let kept: Vec<OrientedEdge> = q.into_iter().filter(|&e| !self.is_hidden(e)).collect();
            *merged.entry(kept).or_insert(0.0) += p;
        }
        Ok(merged.into_iter().collect())
    }

    fn utility_edges(&self, path: &Path) -> Vec<OrientedEdge> {
        self.inner
            .utility_edges(path)
            .into_iter()
            .filter(|&e| !self.is_hidden(e))
            .collect()
    }
}

/// A mechanism given by an explicit table, one distribution per path.
#[derive(Debug, Clone, Default)]
pub struct TableMechanism {
    table: HashMap<Path, TraceDistribution>,
}

impl TableMechanism {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: Path, dist: TraceDistribution) -> Result<()> {
        if dist.path_len() != path.len() {
            return Err(Error::contract("distribution length does not match its path"));
        }
        self.table.insert(path, dist);
        Ok(())
    }
}

impl TraceSource for TableMechanism {
    fn trace_distribution(&self, path: &Path) -> Result<Vec<(Vec<OrientedEdge>, f64)>> {
        self.table
            .get(path)
            .map(|d| d.on_path(path))
            .ok_or_else(|| Error::contract(format!("no distribution for path {path}")))
    }
}

/// Worst-case utility: the smallest per-edge refresh probability over all paths.
/// Paths whose edges are all excluded from utility impose no constraint.
pub fn utility_of<S: TraceSource + ?Sized>(source: &S, paths: &[Path]) -> Result<f64> {
    if paths.is_empty() {
        return Err(Error::contract("utility of an empty path set"));
    }
    let mut best = 1.0f64;
    for path in paths {
        let dist = source.trace_distribution(path)?;
        for e in source.utility_edges(path) {
            let m: f64 = dist
                .iter()
                .filter(|(q, _)| q.binary_search(&e).is_ok())
                .fold(0.0, |acc, x| acc + x.1);
            best = best.min(m);
        }
    }
    Ok(best)
}
