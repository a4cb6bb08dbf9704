//! Graph construction: synthetic generators, user-server and LND-like builders,
//! snapshot CSV I/O, snowball sampling and balance initialisation.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkState, NodeId};
use crate::privacy::UserServerLayout;

/// Shape of the channel graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    ErdosRenyi {
        n: usize,
        p: f64,
    },
    /// Grows `init` by `added` nodes, each linking to `m` distinct existing nodes
    /// chosen with probability proportional to degree.
    BarabasiAlbert {
        init: Box<GraphSpec>,
        added: usize,
        m: usize,
    },
    Clique {
        n: usize,
    },
    PathGraph {
        n: usize,
    },
    Cycle {
        n: usize,
    },
    Grid {
        width: usize,
        height: usize,
    },
    /// Complete `branching`-ary tree; depth 0 is a single node.
    Tree {
        branching: usize,
        depth: usize,
    },
    /// Server graph plus `users` non-relaying users (ids after the servers).
    UserServer {
        servers: Box<GraphSpec>,
        users: usize,
        #[serde(default)]
        attach: Attachment,
    },
    /// A high-degree core plus `low_degree[d-1]` added nodes of degree `d`
    /// (d = 1..=len), each linked to `d` distinct core nodes chosen uniformly.
    LndLike {
        core: Box<GraphSpec>,
        low_degree: Vec<usize>,
    },
    Snapshot {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Attachment {
    #[default]
    SingleHome,
    /// Each user links to a uniform number of servers in `min..=max`.
    MultiHome { min: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceInit {
    /// `floor(C/2)` on the lower-id side.
    #[default]
    EvenSplit,
    UniformRandom,
    FromSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub graph: GraphSpec,
    /// Capacity of every channel; `None` keeps snapshot capacities.
    #[serde(default)]
    pub capacity: Option<u64>,
    #[serde(default)]
    pub balance_init: BalanceInit,
    /// Snowball-sample the generated graph down to this many nodes.
    #[serde(default)]
    pub snowball: Option<usize>,
}

impl TopologySpec {
    pub fn new(graph: GraphSpec, capacity: u64) -> Self {
        TopologySpec {
            graph,
            capacity: Some(capacity),
            balance_init: BalanceInit::EvenSplit,
            snowball: None,
        }
    }

    /// Whether generation consumes randomness (fixed snapshots do not).
    pub fn is_random(&self) -> bool {
        self.snowball.is_some()
            || self.balance_init == BalanceInit::UniformRandom
            || self.graph.is_random()
    }
}

impl GraphSpec {
    pub fn is_random(&self) -> bool {
        match self {
            GraphSpec::ErdosRenyi { .. }
            | GraphSpec::BarabasiAlbert { .. }
            | GraphSpec::UserServer { .. }
            | GraphSpec::LndLike { .. } => true,
            GraphSpec::Clique { .. }
            | GraphSpec::PathGraph { .. }
            | GraphSpec::Cycle { .. }
            | GraphSpec::Grid { .. }
            | GraphSpec::Tree { .. }
            | GraphSpec::Snapshot { .. } => false,
        }
    }
}

/// A generated network with node labels and, for user-server graphs, the layout.
#[derive(Debug, Clone)]
pub struct Topology {
    pub network: NetworkState,
    pub labels: Vec<String>,
    pub user_server: Option<UserServerLayout>,
}

/// Simple undirected graph under construction.
#[derive(Debug, Clone, Default)]
struct Graph {
    n: usize,
    edges: Vec<(NodeId, NodeId)>,
    adj: Vec<BTreeSet<NodeId>>,
    // Per-edge (capacity, balance of the first endpoint), snapshots only.
    weights: Option<Vec<(u64, Option<u64>)>>,
    labels: Option<Vec<String>>,
    layout: Option<UserServerLayout>,
}

impl Graph {
    fn with_nodes(n: usize) -> Self {
        Graph {
            n,
            adj: vec![BTreeSet::new(); n],
            ..Graph::default()
        }
    }

    fn add_node(&mut self) -> NodeId {
        self.adj.push(BTreeSet::new());
        self.n += 1;
        self.n - 1
    }

    fn add_edge(&mut self, a: NodeId, b: NodeId) -> bool {
        if a == b || self.adj[a].contains(&b) {
            return false;
        }
        self.adj[a].insert(b);
        self.adj[b].insert(a);
        self.edges.push((a, b));
        true
    }

    fn degree(&self, v: NodeId) -> usize {
        self.adj[v].len()
    }
}

/// `amount` distinct indices from `0..len`, weighted by `weight`; zero-weight
/// items are only used when too few items have positive weight.
fn weighted_distinct<R: Rng + ?Sized>(
    rng: &mut R,
    len: usize,
    amount: usize,
    weight: impl Fn(usize) -> f64,
) -> Result<Vec<usize>> {
    if amount > len {
        return Err(Error::Topology(format!("cannot pick {amount} distinct nodes out of {len}")));
    }
    let positive = (0..len).filter(|&i| weight(i) > 0.0).count();
    let picked = if positive >= amount {
        index::sample_weighted(rng, len, &weight, amount)
    } else {
        index::sample_weighted(rng, len, |i| weight(i) + 1.0, amount)
    };
    picked
        .map(|iv| iv.into_vec())
        .map_err(|e| Error::Topology(format!("weighted sampling failed: {e}")))
}

fn build_graph<R: Rng + ?Sized>(spec: &GraphSpec, rng: &mut R) -> Result<Graph> {
    match spec {
        GraphSpec::ErdosRenyi { n, p } => {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::domain(format!("edge probability {p} outside [0, 1]")));
            }
            let mut g = Graph::with_nodes(*n);
            for a in 0..*n {
                for b in a + 1..*n {
                    if rng.random::<f64>() < *p {
                        g.add_edge(a, b);
                    }
                }
            }
            Ok(g)
        }
        GraphSpec::BarabasiAlbert { init, added, m } => {
            let mut g = build_graph(init, rng)?;
            if g.weights.is_some() || g.layout.is_some() {
                return Err(Error::Topology("preferential growth needs a plain seed graph".into()));
            }
            if *m == 0 {
                return Err(Error::domain("BA needs at least one link per new node"));
            }
            for _ in 0..*added {
                let existing = g.n;
                let targets = weighted_distinct(rng, existing, *m, |i| g.degree(i) as f64)?;
                let v = g.add_node();
                for t in targets {
                    g.add_edge(v, t);
                }
            }
            Ok(g)
        }
        GraphSpec::Clique { n } => {
            let mut g = Graph::with_nodes(*n);
            for a in 0..*n {
                for b in a + 1..*n {
                    g.add_edge(a, b);
                }
            }
            Ok(g)
        }
        GraphSpec::PathGraph { n } => {
            let mut g = Graph::with_nodes(*n);
            for a in 1..*n {
                g.add_edge(a - 1, a);
            }
            Ok(g)
        }
        GraphSpec::Cycle { n } => {
            if *n < 3 {
                return Err(Error::domain("a cycle needs at least 3 nodes"));
            }
            let mut g = Graph::with_nodes(*n);
            for a in 0..*n {
                g.add_edge(a, (a + 1) % n);
            }
            Ok(g)
        }
        GraphSpec::Grid { width, height } => {
            let mut g = Graph::with_nodes(width * height);
            for r in 0..*height {
                for c in 0..*width {
                    let v = r * width + c;
                    if c + 1 < *width {
                        g.add_edge(v, v + 1);
                    }
                    if r + 1 < *height {
                        g.add_edge(v, v + width);
                    }
                }
            }
            Ok(g)
        }
        GraphSpec::Tree { branching, depth } => {
            let mut g = Graph::with_nodes(1);
            let mut level = vec![0];
            for _ in 0..*depth {
                let mut next = Vec::new();
                for &p in &level {
                    for _ in 0..*branching {
                        let c = g.add_node();
                        g.add_edge(p, c);
                        next.push(c);
                    }
                }
                level = next;
            }
            Ok(g)
        }
        GraphSpec::UserServer { servers, users, attach } => {
            if *users == 0 {
                return Err(Error::domain("user-server graph needs at least one user"));
            }
            let mut g = build_graph(servers, rng)?;
            if g.weights.is_some() || g.layout.is_some() {
                return Err(Error::Topology("server graph must be a plain generated graph".into()));
            }
            let ns = g.n;
            if ns == 0 {
                return Err(Error::domain("user-server graph needs at least one server"));
            }
            let mut attachments = Vec::new();
            for _ in 0..*users {
                let k = match *attach {
                    Attachment::SingleHome => 1,
                    Attachment::MultiHome { min, max } => {
                        if min == 0 || min > max {
                            return Err(Error::domain(format!("bad multi-home range {min}..={max}")));
                        }
                        rng.random_range(min..=max).min(ns)
                    }
                };
                let targets = weighted_distinct(rng, ns, k, |i| g.degree(i) as f64)?;
                let u = g.add_node();
                for s in targets {
                    g.add_edge(u, s);
                    attachments.push((u, s));
                }
            }
            let server_ids: Vec<NodeId> = (0..ns).collect();
            g.layout = Some(UserServerLayout::new(g.n, &server_ids, &attachments)?);
            Ok(g)
        }
        GraphSpec::LndLike { core, low_degree } => {
            let mut g = build_graph(core, rng)?;
            if g.weights.is_some() || g.layout.is_some() {
                return Err(Error::Topology("LND-like core must be a plain generated graph".into()));
            }
            let core_n = g.n;
            if let Some(v) = (0..core_n).find(|&v| g.degree(v) <= low_degree.len()) {
                return Err(Error::Topology(format!(
                    "core node {v} has degree {}, which collides with the low-degree targets",
                    g.degree(v)
                )));
            }
            for (i, &count) in low_degree.iter().enumerate() {
                let d = i + 1;
                for _ in 0..count {
                    let targets = index::sample(rng, core_n, d.min(core_n)).into_vec();
                    let v = g.add_node();
                    for t in targets {
                        g.add_edge(v, t);
                    }
                }
            }
            Ok(g)
        }
        GraphSpec::Snapshot { path } => read_snapshot(path),
    }
}

/// Builds a network from `spec`. Disconnected results are returned as-is;
/// callers that need reachability check [`NetworkState::is_connected`].
pub fn generate<R: Rng + ?Sized>(spec: &TopologySpec, rng: &mut R) -> Result<Topology> {
    let g = build_graph(&spec.graph, rng)?;
    let mut net = NetworkState::new(g.n);
    for (i, &(a, b)) in g.edges.iter().enumerate() {
        let file = g.weights.as_ref().map(|w| w[i]);
        let capacity = match (spec.capacity, file) {
            (Some(c), _) => c,
            (None, Some((c, _))) => c,
            (None, None) => {
                return Err(Error::Topology("capacity missing for a generated graph".into()));
            }
        };
        let balance = match spec.balance_init {
            BalanceInit::EvenSplit => capacity / 2,
            BalanceInit::UniformRandom => rng.random_range(0..=capacity),
            BalanceInit::FromSnapshot => match file {
                Some((_, Some(b))) if b <= capacity => b,
                Some((_, Some(b))) => {
                    return Err(Error::Topology(format!(
                        "snapshot balance {b} exceeds capacity {capacity} on channel {a}-{b}"
                    )))
                }
                _ => {
                    return Err(Error::Topology(format!(
                        "channel {a}-{b} has no snapshot balance"
                    )))
                }
            },
        };
        net.add_channel(a, b, capacity, balance)?;
    }
    let labels = g
        .labels
        .unwrap_or_else(|| (0..g.n).map(|i| i.to_string()).collect());
    let mut topo = Topology {
        network: net,
        labels,
        user_server: g.layout,
    };
    if let Some(target) = spec.snowball {
        let (net, kept) = snowball_sample(&topo.network, target, rng)?;
        topo.labels = kept.iter().map(|&v| topo.labels[v].clone()).collect();
        topo.network = net;
        // Sampling breaks the server/user bookkeeping; drop it rather than guess.
        topo.user_server = None;
    }
    Ok(topo)
}

pub fn degree_histogram(net: &NetworkState) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for v in 0..net.node_count() {
        *h.entry(net.degree(v)).or_insert(0) += 1;
    }
    h
}

/// Breadth-first expansion from a random node until `target` nodes are kept;
/// returns the induced subnetwork and the original id of each kept node.
pub fn snowball_sample<R: Rng + ?Sized>(
    net: &NetworkState,
    target: usize,
    rng: &mut R,
) -> Result<(NetworkState, Vec<NodeId>)> {
    let n = net.node_count();
    if target < 2 || target > n {
        return Err(Error::domain(format!("snowball target {target} outside 2..={n}")));
    }
    // Component sizes, to pick a seed that can reach the target.
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        let mut q = VecDeque::from([s]);
        comp[s] = id;
        while let Some(x) = q.pop_front() {
            size += 1;
            for &(y, _) in net.neighbors(x) {
                if comp[y] == usize::MAX {
                    comp[y] = id;
                    q.push_back(y);
                }
            }
        }
        sizes.push(size);
    }
    let seeds: Vec<NodeId> = (0..n).filter(|&v| sizes[comp[v]] >= target).collect();
    if seeds.is_empty() {
        return Err(Error::Topology(format!("no connected component has {target} nodes")));
    }
    let seed = seeds[rng.random_range(0..seeds.len())];
    let mut kept = vec![seed];
    let mut seen = vec![false; n];
    seen[seed] = true;
    let mut q = VecDeque::from([seed]);
    'grow: while let Some(x) = q.pop_front() {
        let mut nbrs: Vec<NodeId> = net.neighbors(x).iter().map(|e| e.0).collect();
        nbrs.sort_unstable();
        nbrs.shuffle(rng);
        for y in nbrs {
            if !seen[y] {
                seen[y] = true;
                kept.push(y);
                q.push_back(y);
                if kept.len() == target {
                    break 'grow;
                }
            }
        }
    }
    let mut new_id = vec![usize::MAX; n];
    for (i, &v) in kept.iter().enumerate() {
        new_id[v] = i;
    }
    let mut out = NetworkState::new(target);
    for c in net.channels() {
        if new_id[c.u] != usize::MAX && new_id[c.v] != usize::MAX {
            let idx = out.add_channel(new_id[c.u], new_id[c.v], c.capacity, c.true_balance(c.u))?;
            out.channel_mut(idx).set_public(new_id[c.u], c.public_balance(c.u))?;
        }
    }
    Ok((out, kept))
}

fn parse_err(path: &FsPath, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_token(path: &FsPath, line: usize, what: &str, s: &str) -> Result<u64> {
    let v: i128 = s
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what} {s:?} is not an integer")))?;
    if v < 0 {
        return Err(parse_err(path, line, format!("negative {what} {v}")));
    }
    u64::try_from(v).map_err(|_| parse_err(path, line, format!("{what} {v} too large")))
}

/// Parses snapshot CSV text (see [`load_snapshot`]) into a graph with weights.
fn parse_snapshot(path: &FsPath, text: &str) -> Result<Graph> {
    let mut g = Graph::default();
    let mut labels: Vec<String> = Vec::new();
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    let mut weights = Vec::new();
    let mut seen_data = false;
    let mut intern = |g: &mut Graph, label: &str| -> NodeId {
        if let Some(&id) = ids.get(label) {
            return id;
        }
        let id = g.add_node();
        ids.insert(label.to_string(), id);
        labels.push(label.to_string());
        id
    };
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#node,") {
            let label = rest.trim();
            if label.is_empty() || label.contains(',') {
                return Err(parse_err(path, line_no, "bad node declaration"));
            }
            intern(&mut g, label);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(parse_err(
                path,
                line_no,
                format!("expected node_a,node_b,capacity[,balance_ab], got {} fields", fields.len()),
            ));
        }
        let first_data = !seen_data;
        seen_data = true;
        if first_data && fields[2].parse::<i128>().is_err() {
            // Header row.
            continue;
        }
        let (a_label, b_label) = (fields[0], fields[1]);
        if a_label.is_empty() || b_label.is_empty() {
            return Err(parse_err(path, line_no, "empty node label"));
        }
        if a_label == b_label {
            return Err(parse_err(path, line_no, format!("self-loop on {a_label}")));
        }
        let capacity = parse_token(path, line_no, "capacity", fields[2])?;
        let balance = match fields.get(3) {
            Some(s) if !s.is_empty() => {
                let b = parse_token(path, line_no, "balance", s)?;
                if b > capacity {
                    return Err(parse_err(path, line_no, format!("balance {b} exceeds capacity {capacity}")));
                }
                Some(b)
            }
            _ => None,
        };
        let a = intern(&mut g, a_label);
        let b = intern(&mut g, b_label);
        if !g.add_edge(a, b) {
            return Err(parse_err(path, line_no, format!("duplicate channel {a_label}-{b_label}")));
        }
        weights.push((capacity, balance));
    }
    g.weights = Some(weights);
    g.labels = Some(labels);
    Ok(g)
}

fn read_snapshot(path: &FsPath) -> Result<Graph> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_snapshot(path, &text)
}

/// Loads a snapshot: rows `node_a,node_b,capacity[,balance_ab]`, an optional
/// header row, `#` comments, and `#node,<label>` lines declaring nodes (which
/// fixes id order and keeps isolated nodes). Public balances start truthful.
///
/// Rows without a balance get an even split.
pub fn load_snapshot(path: &FsPath) -> Result<Topology> {
    let g = read_snapshot(path)?;
    let mut net = NetworkState::new(g.n);
    let weights = g.weights.as_ref().expect("snapshots carry weights");
    for (&(a, b), &(c, bal)) in g.edges.iter().zip(weights) {
        net.add_channel(a, b, c, bal.unwrap_or(c / 2))?;
    }
    Ok(Topology {
        network: net,
        labels: g.labels.unwrap_or_default(),
        user_server: None,
    })
}

/// Renders a snapshot of the true balances.
pub fn snapshot_csv(net: &NetworkState, labels: &[String]) -> Result<String> {
    if labels.len() != net.node_count() {
        return Err(Error::contract("one label per node required"));
    }
    let mut out = String::new();
    for l in labels {
        if l.contains(',') || l.starts_with('#') || l.is_empty() {
            return Err(Error::contract(format!("label {l:?} cannot be written to CSV")));
        }
        writeln!(out, "#node,{l}").unwrap();
    }
    out.push_str("node_a,node_b,capacity,balance_ab\n");
    for c in net.channels() {
        writeln!(out, "{},{},{},{}", labels[c.u], labels[c.v], c.capacity, c.true_balance(c.u)).unwrap();
    }
    Ok(out)
}

pub fn save_snapshot(net: &NetworkState, labels: &[String], path: &FsPath) -> Result<()> {
    let text = snapshot_csv(net, labels)?;
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn spec(graph: GraphSpec) -> TopologySpec {
        TopologySpec::new(graph, 1000)
    }

    #[test]
    fn deterministic_shapes() {
        let mut rng = rng_from(1, &[]);
        let t = generate(&spec(GraphSpec::Clique { n: 5 }), &mut rng).unwrap();
        assert_eq!(t.network.channel_count(), 10);
        let t = generate(&spec(GraphSpec::Grid { width: 2, height: 3 }), &mut rng).unwrap();
        assert_eq!(t.network.channel_count(), 7);
        let t = generate(&spec(GraphSpec::Tree { branching: 3, depth: 2 }), &mut rng).unwrap();
        assert_eq!(t.network.node_count(), 13);
        assert_eq!(t.network.channel_count(), 12);
        let t = generate(&spec(GraphSpec::Cycle { n: 5 }), &mut rng).unwrap();
        assert_eq!(t.network.channel_count(), 5);
        assert!(t.network.channels().iter().all(|c| c.true_balance(c.u) == 500 && c.is_truthful()));
    }

    #[test]
    fn ba_counts() {
        let mut rng = rng_from(2, &[]);
        let g = GraphSpec::BarabasiAlbert {
            init: Box::new(GraphSpec::Clique { n: 3 }),
            added: 47,
            m: 2,
        };
        let t = generate(&spec(g), &mut rng).unwrap();
        assert_eq!(t.network.node_count(), 50);
        assert_eq!(t.network.channel_count(), 97);
        assert!(t.network.is_connected());
    }

    #[test]
    fn odd_capacity_even_split() {
        let mut s = spec(GraphSpec::PathGraph { n: 2 });
        s.capacity = Some(7);
        let t = generate(&s, &mut rng_from(3, &[])).unwrap();
        let c = t.network.channel(0);
        assert_eq!((c.true_balance(0), c.true_balance(1)), (3, 4));
    }

    #[test]
    fn user_server_single_home() {
        let s = spec(GraphSpec::UserServer {
            servers: Box::new(GraphSpec::PathGraph { n: 2 }),
            users: 8,
            attach: Attachment::SingleHome,
        });
        let t = generate(&s, &mut rng_from(4, &[])).unwrap();
        let l = t.user_server.unwrap();
        assert_eq!(t.network.node_count(), 10);
        assert_eq!(t.network.channel_count(), 9);
        assert_eq!(l.clouds.values().map(|c| c.len() - 1).sum::<usize>(), 8);
        assert!((2..10).all(|u| t.network.degree(u) == 1));
    }

    #[test]
    fn lnd_like_histogram_is_exact() {
        let core = GraphSpec::BarabasiAlbert {
            init: Box::new(GraphSpec::Clique { n: 6 }),
            added: 20,
            m: 5,
        };
        let s = spec(GraphSpec::LndLike {
            core: Box::new(core),
            low_degree: vec![7, 5, 3, 2],
        });
        let t = generate(&s, &mut rng_from(5, &[])).unwrap();
        let h = degree_histogram(&t.network);
        for (d, want) in [(1, 7), (2, 5), (3, 3), (4, 2)] {
            assert_eq!(h.get(&d).copied().unwrap_or(0), want);
        }
        let bad = spec(GraphSpec::LndLike {
            core: Box::new(GraphSpec::Clique { n: 4 }),
            low_degree: vec![1, 1, 1, 1],
        });
        assert!(generate(&bad, &mut rng_from(5, &[])).is_err());
    }

    #[test]
    fn snapshot_parse_rules() {
        let p = FsPath::new("mem.csv");
        let g = parse_snapshot(p, "A,B,5\nB,C,7\nC,A,9\n").unwrap();
        assert_eq!(g.n, 3);
        assert_eq!(g.weights.unwrap(), vec![(5, None), (7, None), (9, None)]);
        let g = parse_snapshot(p, "node_a,node_b,capacity\n# c\nA,B,16777216,3\n").unwrap();
        assert_eq!(g.weights.unwrap(), vec![(1 << 24, Some(3))]);
        for (text, line) in [
            ("A,A,5\n", 1),
            ("A,B,5\nB,A,5\n", 2),
            ("A,B,5\nB,C,-1\n", 2),
            ("A,B,5\nB,C,x\n", 2),
            ("A,B,5,6\n", 1),
            ("A,B\n", 1),
        ] {
            match parse_snapshot(p, text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let mut s = spec(GraphSpec::ErdosRenyi { n: 30, p: 0.1 });
        s.balance_init = BalanceInit::UniformRandom;
        let t = generate(&s, &mut rng_from(6, &[])).unwrap();
        save_snapshot(&t.network, &t.labels, &path).unwrap();
        let back = load_snapshot(&path).unwrap();
        assert_eq!(back.network, t.network);
        assert_eq!(back.labels, t.labels);

        let from_file = TopologySpec {
            graph: GraphSpec::Snapshot { path: path.clone() },
            capacity: None,
            balance_init: BalanceInit::FromSnapshot,
            snowball: None,
        };
        assert_eq!(generate(&from_file, &mut rng_from(0, &[])).unwrap().network, t.network);
    }

    #[test]
    fn snowball_edges() {
        let mut rng = rng_from(7, &[]);
        let t = generate(&spec(GraphSpec::Grid { width: 4, height: 4 }), &mut rng).unwrap();
        let (same, kept) = snowball_sample(&t.network, 16, &mut rng).unwrap();
        assert_eq!(same.channel_count(), t.network.channel_count());
        assert_eq!(kept.len(), 16);
        let (two, _) = snowball_sample(&t.network, 2, &mut rng).unwrap();
        assert_eq!(two.channel_count(), 1);
        assert!(snowball_sample(&t.network, 17, &mut rng).is_err());
        let split = NetworkState::from_channels(5, [(0, 1, 4, 2), (2, 3, 4, 2), (3, 4, 4, 2)]).unwrap();
        assert!(snowball_sample(&split, 4, &mut rng).is_err());
        let (three, _) = snowball_sample(&split, 3, &mut rng).unwrap();
        assert!(three.is_connected());
    }
}
