//! Path sets available to routing, and path-trace endpoint recovery.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkState, NodeId, OrientedEdge, Path};
use crate::privacy::adversary::UserServerLayout;

pub const SHORTEST_PATHS_NODE_CAP: usize = 200;
pub const FIXED_LENGTH_NODE_CAP: usize = 9;
pub const FIXED_LENGTH_MAX_LEN: usize = 6;
/// Upper bound on the number of enumerated paths, whatever the policy.
pub const PATH_COUNT_CAP: usize = 2_000_000;

/// Which paths the router may use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathPolicy {
    ShortestPaths,
    FixedLength { length: usize },
    ExplicitList { paths: Vec<Vec<NodeId>> },
}

/// Enumerates the path set of `policy` on the graph of `net`.
pub fn enumerate_paths(net: &NetworkState, policy: &PathPolicy) -> Result<Vec<Path>> {
    let n = net.node_count();
    match policy {
        PathPolicy::ShortestPaths => {
            if n > SHORTEST_PATHS_NODE_CAP {
                return Err(Error::SizeCap {
                    what: "nodes for shortest-path enumeration",
                    actual: n,
                    limit: SHORTEST_PATHS_NODE_CAP,
                });
            }
            let mut out = Vec::new();
            for s in 0..n {
                shortest_from(net, s, &mut out)?;
            }
            Ok(out)
        }
        PathPolicy::FixedLength { length } => {
            if *length == 0 {
                return Err(Error::contract("fixed path length must be at least 1"));
            }
            if n > FIXED_LENGTH_NODE_CAP {
                return Err(Error::SizeCap {
                    what: "nodes for fixed-length enumeration",
                    actual: n,
                    limit: FIXED_LENGTH_NODE_CAP,
                });
            }
            if *length > FIXED_LENGTH_MAX_LEN {
                return Err(Error::SizeCap {
                    what: "fixed path length",
                    actual: *length,
                    limit: FIXED_LENGTH_MAX_LEN,
                });
            }
            let mut out = Vec::new();
            let mut stack = Vec::with_capacity(length + 1);
            let mut on_path = vec![false; n];
            for s in 0..n {
                stack.push(s);
                on_path[s] = true;
                extend_simple(net, *length, &mut stack, &mut on_path, &mut out);
                on_path[s] = false;
                stack.pop();
            }
            Ok(out)
        }
        PathPolicy::ExplicitList { paths } => paths
            .iter()
            .map(|nodes| {
                let p = Path::new(nodes.clone())?;
                net.check_path(&p)?;
                Ok(p)
            })
            .collect(),
    }
}

fn extend_simple(
    net: &NetworkState,
    length: usize,
    stack: &mut Vec<NodeId>,
    on_path: &mut [bool],
    out: &mut Vec<Path>,
) {
    if stack.len() == length + 1 {
        out.push(Path::new(stack.clone()).expect("simple by construction"));
        return;
    }
    let last = *stack.last().unwrap();
    let mut next: Vec<NodeId> = net.neighbors(last).iter().map(|x| x.0).collect();
    next.sort_unstable();
    for y in next {
        if !on_path[y] {
            on_path[y] = true;
            stack.push(y);
            extend_simple(net, length, stack, on_path, out);
            stack.pop();
            on_path[y] = false;
        }
    }
}

/// All hop-count-shortest paths from `s` to every other reachable node.
fn shortest_from(net: &NetworkState, s: NodeId, out: &mut Vec<Path>) -> Result<()> {
    let n = net.node_count();
    let mut dist = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    dist[s] = 0;
    let mut queue = VecDeque::from([s]);
    while let Some(x) = queue.pop_front() {
        order.push(x);
        for &(y, _) in net.neighbors(x) {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    // Predecessor lists in the shortest-path DAG, sorted for stable output.
    let mut preds: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for &x in &order {
        for &(y, _) in net.neighbors(x) {
            if dist[y] != usize::MAX && dist[y] == dist[x] + 1 {
                preds[y].push(x);
            }
        }
    }
    for p in &mut preds {
        p.sort_unstable();
    }
    let mut targets: Vec<NodeId> = order.iter().copied().filter(|&t| t != s).collect();
    targets.sort_unstable();
    for t in targets {
        let mut suffix = vec![t];
        walk_back(&preds, s, &mut suffix, out)?;
    }
    Ok(())
}

fn walk_back(
    preds: &[Vec<NodeId>],
    s: NodeId,
    suffix: &mut Vec<NodeId>,
    out: &mut Vec<Path>,
) -> Result<()> {
    let head = *suffix.last().unwrap();
    if head == s {
        if out.len() >= PATH_COUNT_CAP {
            return Err(Error::SizeCap {
                what: "enumerated paths",
                actual: out.len() + 1,
                limit: PATH_COUNT_CAP,
            });
        }
        let nodes: Vec<NodeId> = suffix.iter().rev().copied().collect();
        out.push(Path::new(nodes).expect("shortest paths are simple"));
        return Ok(());
    }
    for &p in &preds[head] {
        suffix.push(p);
        walk_back(preds, s, suffix, out)?;
        suffix.pop();
    }
    Ok(())
}

/// Every unordered node pair is joined by some path of the set.
pub fn is_reachable(node_count: usize, paths: &[Path]) -> bool {
    let mut covered = BTreeSet::new();
    for p in paths {
        let (a, b) = (p.source(), p.destination());
        covered.insert((a.min(b), a.max(b)));
    }
    covered.len() == node_count * node_count.saturating_sub(1) / 2
}

/// Convenience wrapper enumerating the policy's paths first.
pub fn is_reachable_under(net: &NetworkState, policy: &PathPolicy) -> Result<bool> {
    Ok(is_reachable(net.node_count(), &enumerate_paths(net, policy)?))
}

/// Whether `path` contains every edge of `trace`.
pub fn path_covers(path: &Path, trace: &[OrientedEdge]) -> bool {
    trace.iter().all(|&e| path.contains_edge(e))
}

/// All (source, destination) pairs of `trace` in the path-trace sense: the
/// endpoints of some path of the set that contains the trace and whose first
/// and last edges both belong to it. Sorted and deduplicated.
pub fn trace_endpoint_candidates(trace: &[OrientedEdge], paths: &[Path]) -> Vec<(NodeId, NodeId)> {
    let mut out: Vec<(NodeId, NodeId)> = paths
        .iter()
        .filter(|p| {
            trace.contains(&p.edge(0)) && trace.contains(&p.edge(p.len() - 1)) && path_covers(p, trace)
        })
        .map(|p| (p.source(), p.destination()))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// The unique (source, destination) of a non-empty trace, as guaranteed under
/// shortest-path routing.
pub fn trace_endpoints(trace: &[OrientedEdge], paths: &[Path]) -> Result<(NodeId, NodeId)> {
    if trace.is_empty() {
        return Err(Error::InvalidTrace("the empty trace has no endpoints".into()));
    }
    let cands = trace_endpoint_candidates(trace, paths);
    match cands.as_slice() {
        [one] => Ok(*one),
        [] => Err(Error::InvalidTrace(format!(
            "{} is not a path trace of any available path",
            fmt_trace(trace)
        ))),
        many => Err(Error::InvalidTrace(format!(
            "{} has {} candidate endpoint pairs",
            fmt_trace(trace),
            many.len()
        ))),
    }
}

/// Paths one step away from `p` under the user-server closure rules: drop a
/// user endpoint, or extend a server endpoint by one of its attached users.
fn closure_neighbors(p: &Path, layout: &UserServerLayout) -> Vec<Vec<NodeId>> {
    let nodes = p.nodes();
    let mut out = Vec::new();
    let (x, y) = (p.source(), p.destination());
    if p.len() >= 2 {
        if !layout.is_server[x] {
            out.push(nodes[1..].to_vec());
        }
        if !layout.is_server[y] {
            out.push(nodes[..nodes.len() - 1].to_vec());
        }
    }
    let users = |s: NodeId| {
        layout
            .clouds
            .get(&s)
            .into_iter()
            .flatten()
            .copied()
            .filter(move |&v| v != s && !nodes.contains(&v))
    };
    if layout.is_server[x] {
        for v in users(x) {
            let mut q = Vec::with_capacity(nodes.len() + 1);
            q.push(v);
            q.extend_from_slice(nodes);
            out.push(q);
        }
    }
    if layout.is_server[y] {
        for v in users(y) {
            let mut q = nodes.to_vec();
            q.push(v);
            out.push(q);
        }
    }
    out
}

/// First path breaking user-server closure, with the missing neighbour.
/// `None` means the set is closed: user endpoints can be truncated and server
/// endpoints extended by any attached user without leaving the set.
pub fn user_server_closure_violation(paths: &[Path], layout: &UserServerLayout) -> Option<(Path, Vec<NodeId>)> {
    let set: BTreeSet<&[NodeId]> = paths.iter().map(|p| p.nodes()).collect();
    paths.iter().find_map(|p| {
        closure_neighbors(p, layout)
            .into_iter()
            .find(|q| !set.contains(q.as_slice()))
            .map(|q| (p.clone(), q))
    })
}

/// Smallest superset of `paths` closed under the user-server rules. Added
/// paths must be channels of `net`.
pub fn user_server_closure(net: &NetworkState, paths: &[Path], layout: &UserServerLayout) -> Result<Vec<Path>> {
    if layout.is_server.len() != net.node_count() {
        return Err(Error::contract("layout and network disagree on node count"));
    }
    let mut seen: BTreeSet<Vec<NodeId>> = paths.iter().map(|p| p.nodes().to_vec()).collect();
    let mut out = paths.to_vec();
    let mut queue: VecDeque<Path> = paths.iter().cloned().collect();
    while let Some(p) = queue.pop_front() {
        for q in closure_neighbors(&p, layout) {
            if seen.contains(&q) {
                continue;
            }
            let path = Path::new(q.clone())?;
            net.check_path(&path)?;
            if out.len() >= PATH_COUNT_CAP {
                return Err(Error::SizeCap {
                    what: "paths in the user-server closure",
                    actual: out.len() + 1,
                    limit: PATH_COUNT_CAP,
                });
            }
            seen.insert(q);
            out.push(path.clone());
            queue.push_back(path);
        }
    }
    Ok(out)
}

pub fn fmt_trace(trace: &[OrientedEdge]) -> String {
    let parts: Vec<String> = trace.iter().map(|e| e.to_string()).collect();
    format!("{{{}}}", parts.join(", "))
}
