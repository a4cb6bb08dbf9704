//! Payment channel network state: channels with true and public directed
//! balances, hop-count routing over public balances, and transaction execution.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::NoiseMechanism;

pub type NodeId = usize;

/// A channel traversed in one direction, `from -> to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OrientedEdge {
    pub from: NodeId,
    pub to: NodeId,
}

impl OrientedEdge {
    pub fn new(from: NodeId, to: NodeId) -> Self {
        OrientedEdge { from, to }
    }

    pub fn reversed(self) -> Self {
        OrientedEdge::new(self.to, self.from)
    }
}

impl fmt::Display for OrientedEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// One payment channel between `u` and `v`.
///
/// Only the `u -> v` side of each balance is stored; the `v -> u` side is
/// `capacity` minus it, so capacity conservation holds by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelState {
    pub u: NodeId,
    pub v: NodeId,
    pub capacity: u64,
    true_uv: u64,
    public_uv: u64,
}

impl ChannelState {
    /// A channel whose public balance starts equal to its true balance.
    pub fn new(u: NodeId, v: NodeId, capacity: u64, balance_uv: u64) -> Result<Self> {
        if u == v {
            return Err(Error::contract(format!("self-loop channel on node {u}")));
        }
        if balance_uv > capacity {
            return Err(Error::contract(format!(
                "balance {balance_uv} exceeds capacity {capacity} on channel {u}-{v}"
            )));
        }
        Ok(ChannelState {
            u,
            v,
            capacity,
            true_uv: balance_uv,
            public_uv: balance_uv,
        })
    }

    pub fn other(&self, node: NodeId) -> NodeId {
        if node == self.u {
            self.v
        } else {
            self.u
        }
    }

    fn side(&self, value_uv: u64, from: NodeId) -> u64 {
        debug_assert!(from == self.u || from == self.v);
        if from == self.u {
            value_uv
        } else {
            self.capacity - value_uv
        }
    }

    /// True balance sendable from `from` to the other endpoint.
    pub fn true_balance(&self, from: NodeId) -> u64 {
        self.side(self.true_uv, from)
    }

    /// Public (possibly stale) balance from `from` to the other endpoint.
    pub fn public_balance(&self, from: NodeId) -> u64 {
        self.side(self.public_uv, from)
    }

    pub fn is_truthful(&self) -> bool {
        self.true_uv == self.public_uv
    }

    pub fn publish_truth(&mut self) {
        self.public_uv = self.true_uv;
    }

    /// Resets the public balances to `(floor(C/2), ceil(C/2))`.
    pub fn publish_even_split(&mut self) {
        self.public_uv = self.capacity / 2;
    }

    /// Overrides the public `u -> v` balance.
    pub fn set_public(&mut self, from: NodeId, balance: u64) -> Result<()> {
        if balance > self.capacity {
            return Err(Error::contract("public balance above capacity"));
        }
        self.public_uv = if from == self.u {
            balance
        } else {
            self.capacity - balance
        };
        Ok(())
    }

    /// Moves `amount` from `from`'s side to the other side. Caller checks funds.
    fn transfer(&mut self, from: NodeId, amount: u64) {
        if from == self.u {
            self.true_uv -= amount;
        } else {
            self.true_uv += amount;
        }
    }
}

/// A simple directed path, stored as its node sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Path {
    nodes: Vec<NodeId>,
}

impl Path {
    /// Builds a path from a node sequence with at least one edge and no repeated node.
    pub fn new(nodes: Vec<NodeId>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::contract("a path needs at least one edge"));
        }
        let mut seen = nodes.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract(format!("path {nodes:?} repeats a node")));
        }
        Ok(Path { nodes })
    }

    /// Builds a path from consecutive oriented edges.
    pub fn from_edges(edges: &[OrientedEdge]) -> Result<Self> {
        let first = edges
            .first()
            .ok_or_else(|| Error::contract("a path needs at least one edge"))?;
        let mut nodes = vec![first.from];
        for (i, e) in edges.iter().enumerate() {
            if e.from != *nodes.last().unwrap() {
                return Err(Error::contract(format!(
                    "edge {i} ({e}) does not start where edge {} ends",
                    i.saturating_sub(1)
                )));
            }
            nodes.push(e.to);
        }
        Path::new(nodes)
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    /// Number of edges (hops).
    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.nodes.last().unwrap()
    }

    pub fn edge(&self, i: usize) -> OrientedEdge {
        OrientedEdge::new(self.nodes[i], self.nodes[i + 1])
    }

    pub fn edges(&self) -> impl ExactSizeIterator<Item = OrientedEdge> + '_ {
        self.nodes.windows(2).map(|w| OrientedEdge::new(w[0], w[1]))
    }

    pub fn contains_edge(&self, e: OrientedEdge) -> bool {
        self.edges().any(|x| x == e)
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.nodes.iter().map(|n| n.to_string()).collect();
        write!(f, "{}", parts.join("->"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub amount: u64,
    pub index: u64,
}

impl Transaction {
    pub fn new(sender: NodeId, receiver: NodeId, amount: u64, index: u64) -> Self {
        Transaction {
            sender,
            receiver,
            amount,
            index,
        }
    }
}

/// What a router may consult when testing whether an edge can carry an amount.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteView {
    /// Public balances only.
    #[default]
    Public,
    /// Public balances, except that the sender sees the true balance of its own
    /// outgoing channels.
    SenderAware,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// The transfer went through; carries the oriented edges whose public
    /// balances were refreshed.
    Succeeded(Vec<OrientedEdge>),
    FailedTrueBalance,
    FailedNoRoute,
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Succeeded(_))
    }
}

/// The whole network: dense node ids `0..n`, at most one channel per node pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkState {
    node_count: usize,
    channels: Vec<ChannelState>,
    adjacency: Vec<Vec<(NodeId, usize)>>,
    pair_index: HashMap<(NodeId, NodeId), usize>,
}

fn pair_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

impl NetworkState {
    pub fn new(node_count: usize) -> Self {
        NetworkState {
            node_count,
            channels: Vec::new(),
            adjacency: vec![Vec::new(); node_count],
            pair_index: HashMap::new(),
        }
    }

    /// Convenience constructor for tests and small fixtures.
    pub fn from_channels(
        node_count: usize,
        channels: impl IntoIterator<Item = (NodeId, NodeId, u64, u64)>,
    ) -> Result<Self> {
        let mut state = NetworkState::new(node_count);
        for (u, v, capacity, balance_uv) in channels {
            state.add_channel(u, v, capacity, balance_uv)?;
        }
        Ok(state)
    }

    /// Opens a channel with `balance_uv` on `u`'s side; public balances start truthful.
    pub fn add_channel(
        &mut self,
        u: NodeId,
        v: NodeId,
        capacity: u64,
        balance_uv: u64,
    ) -> Result<usize> {
        if u >= self.node_count || v >= self.node_count {
            return Err(Error::contract(format!(
                "channel {u}-{v} references a node outside 0..{}",
                self.node_count
            )));
        }
        if self.pair_index.contains_key(&pair_key(u, v)) {
            return Err(Error::contract(format!("duplicate channel {u}-{v}")));
        }
        let channel = ChannelState::new(u, v, capacity, balance_uv)?;
        let idx = self.channels.len();
        self.channels.push(channel);
        self.adjacency[u].push((v, idx));
        self.adjacency[v].push((u, idx));
        self.pair_index.insert(pair_key(u, v), idx);
        Ok(idx)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[ChannelState] {
        &self.channels
    }

    pub fn channel(&self, idx: usize) -> &ChannelState {
        &self.channels[idx]
    }

    pub fn channel_mut(&mut self, idx: usize) -> &mut ChannelState {
        &mut self.channels[idx]
    }

    pub fn channel_between(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.pair_index.get(&pair_key(a, b)).copied()
    }

    /// Neighbours of `node` with the connecting channel index.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, usize)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node].len()
    }

    /// Undirected edge list in channel order.
    pub fn edge_list(&self) -> Vec<(NodeId, NodeId)> {
        self.channels.iter().map(|c| (c.u, c.v)).collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.node_count == 0 {
            return true;
        }
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(x) = queue.pop_front() {
            for &(y, _) in &self.adjacency[x] {
                if !seen[y] {
                    seen[y] = true;
                    count += 1;
                    queue.push_back(y);
                }
            }
        }
        count == self.node_count
    }

    /// Checks balance bounds on every channel.
    pub fn check_invariants(&self) -> Result<()> {
        for (i, c) in self.channels.iter().enumerate() {
            if c.true_uv > c.capacity || c.public_uv > c.capacity {
                return Err(Error::contract(format!("channel {i} balance above capacity")));
            }
        }
        Ok(())
    }

    /// Validates that `path` follows existing channels.
    pub fn check_path(&self, path: &Path) -> Result<()> {
        for e in path.edges() {
            if e.from >= self.node_count || e.to >= self.node_count {
                return Err(Error::contract(format!("path edge {e} leaves the node range")));
            }
            if self.channel_between(e.from, e.to).is_none() {
                return Err(Error::contract(format!("path edge {e} is not a channel")));
            }
        }
        Ok(())
    }

    fn edge_channel(&self, e: OrientedEdge) -> usize {
        self.channel_between(e.from, e.to)
            .expect("edge validated against the channel index")
    }

    /// Hop-count shortest route over edges whose public balance covers the amount,
    /// ties broken uniformly at random.
    pub fn find_route<R: Rng + ?Sized>(&self, tx: &Transaction, rng: &mut R) -> Option<Path> {
        self.find_route_with(tx, RouteView::Public, rng)
    }

    pub fn find_route_with<R: Rng + ?Sized>(
        &self,
        tx: &Transaction,
        view: RouteView,
        rng: &mut R,
    ) -> Option<Path> {
        let (s, d) = (tx.sender, tx.receiver);
        if s == d || s >= self.node_count || d >= self.node_count {
            return None;
        }
        let admissible = |from: NodeId, ch: usize| -> bool {
            let c = &self.channels[ch];
            let balance = if view == RouteView::SenderAware && from == s {
                c.true_balance(from)
            } else {
                c.public_balance(from)
            };
            balance >= tx.amount
        };

        // Layered BFS counting shortest paths; stop once the receiver's layer is done.
        let mut dist = vec![u32::MAX; self.node_count];
        let mut count = vec![0.0f64; self.node_count];
        dist[s] = 0;
        count[s] = 1.0;
        let mut frontier = vec![s];
        let mut depth = 0u32;
        while !frontier.is_empty() && dist[d] == u32::MAX {
            let mut next = Vec::new();
            for &x in &frontier {
                for &(y, ch) in &self.adjacency[x] {
                    if !admissible(x, ch) {
                        continue;
                    }
                    if dist[y] == u32::MAX {
                        dist[y] = depth + 1;
                        next.push(y);
                    }
                    if dist[y] == depth + 1 {
                        count[y] += count[x];
                    }
                }
            }
            frontier = next;
            depth += 1;
        }
        if dist[d] == u32::MAX {
            return None;
        }

        // Walking back with predecessor weights proportional to their path
        // counts picks each shortest path with probability 1 / count[d].
        let mut rev = vec![d];
        let mut cur = d;
        let mut candidates: Vec<(NodeId, f64)> = Vec::new();
        while cur != s {
            candidates.clear();
            for &(p, ch) in &self.adjacency[cur] {
                if dist[p] != u32::MAX && dist[p] + 1 == dist[cur] && admissible(p, ch) {
                    candidates.push((p, count[p]));
                }
            }
            let total: f64 = candidates.iter().map(|c| c.1).sum();
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = candidates[candidates.len() - 1].0;
            for &(p, w) in &candidates {
                if pick < w {
                    chosen = p;
                    break;
                }
                pick -= w;
            }
            rev.push(chosen);
            cur = chosen;
        }
        rev.reverse();
        Some(Path { nodes: rev })
    }

    /// Processes `tx` over `path` (or records a routing failure when `path` is
    /// `None`). On success the true balances move and the public balances of a
    /// trace sampled from `mechanism` are set to the new true balances.
    pub fn execute<R: Rng + ?Sized>(
        &mut self,
        tx: &Transaction,
        path: Option<&Path>,
        mechanism: &NoiseMechanism,
        rng: &mut R,
    ) -> Result<Outcome> {
        let Some(path) = path else {
            return Ok(Outcome::FailedNoRoute);
        };
        if !self.transfer(tx, path)? {
            return Ok(Outcome::FailedTrueBalance);
        }
        let positions = mechanism.sample_positions(path.len(), rng);
        let mut trace = Vec::with_capacity(positions.len());
        for i in positions {
            let e = path.edge(i);
            let ch = self.edge_channel(e);
            self.channels[ch].publish_truth();
            trace.push(e);
        }
        Ok(Outcome::Succeeded(trace))
    }

    /// Moves true balances along `path` if every hop can carry the amount.
    /// Returns `false` (state untouched) when some hop lacks funds.
    pub fn transfer(&mut self, tx: &Transaction, path: &Path) -> Result<bool> {
        if path.source() != tx.sender || path.destination() != tx.receiver {
            return Err(Error::contract(format!(
                "path {path} does not connect {} to {}",
                tx.sender, tx.receiver
            )));
        }
        self.check_path(path)?;
        let channels: Vec<usize> = path.edges().map(|e| self.edge_channel(e)).collect();
        let funded = path
            .edges()
            .zip(&channels)
            .all(|(e, &ch)| self.channels[ch].true_balance(e.from) >= tx.amount);
        if !funded {
            return Ok(false);
        }
        for (e, &ch) in path.edges().zip(&channels) {
            self.channels[ch].transfer(e.from, tx.amount);
        }
        Ok(true)
    }

    /// Publishes the true balance on the channel under `edge`.
    pub fn publish_truth(&mut self, edge: OrientedEdge) -> Result<()> {
        let ch = self
            .channel_between(edge.from, edge.to)
            .ok_or_else(|| Error::contract(format!("{edge} is not a channel")))?;
        self.channels[ch].publish_truth();
        Ok(())
    }

    /// Whether the public balance equals the true balance, for both orientations
    /// of every channel.
    pub fn snapshot_truthfulness(&self) -> BTreeMap<OrientedEdge, bool> {
        let mut map = BTreeMap::new();
        for c in &self.channels {
            let ok = c.is_truthful();
            map.insert(OrientedEdge::new(c.u, c.v), ok);
            map.insert(OrientedEdge::new(c.v, c.u), ok);
        }
        map
    }
}
