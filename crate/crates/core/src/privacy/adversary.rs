//! Explicit adversary strategies. Each yields a certified bound: for any
//! strategy, privacy <= 1 - adversary_success.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::TraceSource;
use crate::network::{NodeId, OrientedEdge, Path};

use super::paths::trace_endpoint_candidates;
use super::{support_traces, AdversaryStrategy, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    /// Uniform guess whatever is observed.
    Uniform,
    /// Names the source of the observed trace; uniform on the empty trace.
    SourceGuess,
    /// Optimal against the alternating mechanism on a complete graph.
    AltOptimal,
    /// Optimal against the i.i.d. mechanism on a complete graph.
    IidOptimal,
    /// Optimal against all-or-nothing on the server channels of a user-server network.
    UserServerCloud,
}

/// Server membership and clouds (a server plus its attached users).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserServerLayout {
    pub is_server: Vec<bool>,
    /// Cloud of each server, keyed by server id.
    pub clouds: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl UserServerLayout {
    /// Builds clouds from user-server attachments `(user, server)`.
    pub fn new(node_count: usize, servers: &[NodeId], attachments: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut is_server = vec![false; node_count];
        let mut clouds = BTreeMap::new();
        for &s in servers {
            if s >= node_count {
                return Err(Error::contract(format!("server {s} outside 0..{node_count}")));
            }
            is_server[s] = true;
            clouds.insert(s, BTreeSet::from([s]));
        }
        for &(u, s) in attachments {
            let cloud = clouds
                .get_mut(&s)
                .ok_or_else(|| Error::contract(format!("user {u} attached to non-server {s}")))?;
            if u >= node_count || is_server[u] {
                return Err(Error::contract(format!("attachment ({u}, {s}) does not start at a user")));
            }
            cloud.insert(u);
        }
        Ok(UserServerLayout { is_server, clouds })
    }

    /// Smallest number of users attached to any server.
    pub fn min_users_per_server(&self) -> usize {
        self.clouds.values().map(|c| c.len() - 1).min().unwrap_or(0)
    }
}

/// What an adversary construction may rely on.
pub struct AdversaryContext<'a> {
    pub node_count: usize,
    pub paths: &'a [Path],
    /// Fixed path length of the path set, when there is one.
    pub path_len: Option<usize>,
    /// Traces to cover; the empty trace is always added.
    pub traces: BTreeSet<Trace>,
    pub user_server: Option<UserServerLayout>,
}

impl<'a> AdversaryContext<'a> {
    /// Context covering every trace `source` can emit on `paths`.
    pub fn new<S: TraceSource + ?Sized>(node_count: usize, paths: &'a [Path], source: &S) -> Result<Self> {
        let path_len = paths.first().map(|p| p.len()).filter(|&l| paths.iter().all(|p| p.len() == l));
        Ok(AdversaryContext {
            node_count,
            paths,
            path_len,
            traces: support_traces(source, paths)?,
            user_server: None,
        })
    }

    pub fn with_user_server(mut self, layout: UserServerLayout) -> Self {
        self.user_server = Some(layout);
        self
    }

    fn fixed_len(&self) -> Result<usize> {
        self.path_len
            .ok_or_else(|| Error::contract("this adversary needs a fixed path length"))
    }
}

/// Splits a trace into maximal chains of consecutive edges, each given as its
/// node sequence. Fails if the edges do not form vertex-disjoint simple chains.
pub fn segments(trace: &[OrientedEdge]) -> Result<Vec<Vec<NodeId>>> {
    let mut next: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut has_pred: BTreeSet<NodeId> = BTreeSet::new();
    for e in trace {
        if next.insert(e.from, e.to).is_some() || !has_pred.insert(e.to) {
            return Err(Error::InvalidTrace("trace branches".into()));
        }
    }
    let mut out = Vec::new();
    let mut used = 0;
    for &start in next.keys() {
        if has_pred.contains(&start) {
            continue;
        }
        let mut seg = vec![start];
        let mut cur = start;
        while let Some(&n) = next.get(&cur) {
            seg.push(n);
            cur = n;
            used += 1;
        }
        out.push(seg);
    }
    if used != trace.len() {
        return Err(Error::InvalidTrace("trace contains a cycle".into()));
    }
    Ok(out)
}

/// Value of the best guess against a server-path observation whose clouds split
/// into X, Y (exclusive) and Z (shared).
pub fn cloud_value(x: usize, y: usize, z: usize) -> f64 {
    let (x, y, z) = (x as f64, y as f64, z as f64);
    let mut v = 2.0 / (x + y + z);
    if x + z > 0.0 {
        v = v.max(1.0 / (x + z));
    }
    if y + z > 0.0 {
        v = v.max(1.0 / (y + z));
    }
    v
}

pub fn make_adversary(kind: AdversaryKind, ctx: &AdversaryContext<'_>) -> Result<AdversaryStrategy> {
    let n = ctx.node_count;
    if n < 2 {
        return Err(Error::contract("adversary needs at least two nodes"));
    }
    let mut strategy = AdversaryStrategy::new(n);
    strategy.set_uniform(Vec::new());
    for q in ctx.traces.iter().filter(|q| !q.is_empty()) {
        match kind {
            AdversaryKind::Uniform => strategy.set_uniform(q.clone()),
            AdversaryKind::SourceGuess => {
                let sources: Vec<NodeId> = trace_endpoint_candidates(q, ctx.paths)
                    .into_iter()
                    .map(|c| c.0)
                    .collect();
                if sources.is_empty() {
                    strategy.set_uniform(q.clone());
                } else {
                    strategy.set_uniform_over(q.clone(), &sources)?;
                }
            }
            AdversaryKind::AltOptimal => alt_guess(&mut strategy, q, n, ctx.fixed_len()?)?,
            AdversaryKind::IidOptimal => iid_guess(&mut strategy, q, n, ctx.fixed_len()?)?,
            AdversaryKind::UserServerCloud => {
                let layout = ctx
                    .user_server
                    .as_ref()
                    .ok_or_else(|| Error::contract("cloud adversary needs a user-server layout"))?;
                cloud_guess(&mut strategy, q, layout)?;
            }
        }
    }
    Ok(strategy)
}

struct Coloring {
    gray: Vec<NodeId>,
    white: Vec<NodeId>,
    black: Vec<NodeId>,
    segments: usize,
}

fn color(trace: &[OrientedEdge], n: usize) -> Result<Coloring> {
    let segs = segments(trace)?;
    let mut gray = Vec::new();
    let mut white = Vec::new();
    for s in &segs {
        gray.push(s[0]);
        gray.push(*s.last().unwrap());
        white.extend_from_slice(&s[1..s.len() - 1]);
    }
    let touched: BTreeSet<NodeId> = gray.iter().chain(&white).copied().collect();
    if touched.iter().any(|&v| v >= n) {
        return Err(Error::contract("trace names a node outside the graph"));
    }
    let black = (0..n).filter(|v| !touched.contains(v)).collect();
    Ok(Coloring {
        gray,
        white,
        black,
        segments: segs.len(),
    })
}

fn alt_guess(strategy: &mut AdversaryStrategy, q: &Trace, n: usize, len: usize) -> Result<()> {
    if len < 2 {
        return Err(Error::contract("alternating adversary needs path length >= 2"));
    }
    let c = color(q, n)?;
    let half = len / 2;
    if q.len() == len && c.segments == 1 {
        // The whole path was revealed.
        return strategy.set_uniform_over(q.clone(), &c.gray);
    }
    let nodes: Vec<NodeId> = if len % 2 == 0 {
        if q.len() != half {
            return Err(Error::InvalidTrace(format!("{} edges on an alternating half-trace", q.len())));
        }
        match (2 * len).cmp(&n) {
            std::cmp::Ordering::Less => c.gray,
            std::cmp::Ordering::Equal => (0..n).collect(),
            std::cmp::Ordering::Greater => c.black,
        }
    } else if q.len() == half + 1 {
        c.gray
    } else if q.len() == half {
        c.black
    } else {
        return Err(Error::InvalidTrace(format!("{} edges on an alternating half-trace", q.len())));
    };
    strategy.set_uniform_over(q.clone(), &nodes)
}

fn iid_guess(strategy: &mut AdversaryStrategy, q: &Trace, n: usize, len: usize) -> Result<()> {
    let c = color(q, n)?;
    let lambda = len + 1;
    let revealed = q.len() + c.segments;
    if revealed > lambda || lambda > n {
        return Err(Error::InvalidTrace("trace does not fit the path length".into()));
    }
    let k = lambda - revealed;
    debug_assert_eq!(c.white.len() + 2 * c.segments + k, lambda);
    if k <= n - lambda {
        strategy.set_uniform_over(q.clone(), &c.gray)
    } else {
        strategy.set_uniform_over(q.clone(), &c.black)
    }
}

fn cloud_guess(strategy: &mut AdversaryStrategy, q: &Trace, layout: &UserServerLayout) -> Result<()> {
    let segs = segments(q)?;
    let [seg] = segs.as_slice() else {
        strategy.set_uniform(q.clone());
        return Ok(());
    };
    let (x, y) = (seg[0], *seg.last().unwrap());
    let (Some(cx), Some(cy)) = (layout.clouds.get(&x), layout.clouds.get(&y)) else {
        return Err(Error::InvalidTrace("observed server path ends at a user".into()));
    };
    let z: BTreeSet<NodeId> = cx.intersection(cy).copied().collect();
    let xs: Vec<NodeId> = cx.difference(&z).copied().collect();
    let ys: Vec<NodeId> = cy.difference(&z).copied().collect();
    let zs: Vec<NodeId> = z.into_iter().collect();
    let nodes: Vec<NodeId> = if xs.len() > ys.len() + zs.len() {
        ys.iter().chain(&zs).copied().collect()
    } else if ys.len() > xs.len() + zs.len() {
        xs.iter().chain(&zs).copied().collect()
    } else {
        xs.iter().chain(&ys).chain(&zs).copied().collect()
    };
    strategy.set_uniform_over(q.clone(), &nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::NoiseMechanism;
    use crate::network::NetworkState;
    use crate::privacy::{adversary_success, enumerate_paths, PathPolicy};

    fn oe(a: usize, b: usize) -> OrientedEdge {
        OrientedEdge::new(a, b)
    }

    #[test]
    fn segments_split_chains() {
        let s = segments(&[oe(0, 1), oe(1, 2), oe(4, 5)]).unwrap();
        assert_eq!(s, vec![vec![0, 1, 2], vec![4, 5]]);
        assert!(segments(&[oe(0, 1), oe(1, 0)]).is_err());
        assert!(segments(&[oe(0, 1), oe(0, 2)]).is_err());
    }

    #[test]
    fn uniform_on_ten_nodes() {
        let g = NetworkState::from_channels(10, (0..9).map(|i| (i, i + 1, 4, 2))).unwrap();
        let ps = enumerate_paths(&g, &PathPolicy::ShortestPaths).unwrap();
        let m = NoiseMechanism::all_or_nothing(0.5).unwrap();
        let ctx = AdversaryContext::new(10, &ps, &m).unwrap();
        let a = make_adversary(AdversaryKind::Uniform, &ctx).unwrap();
        for q in a.traces() {
            for v in 0..10 {
                assert!((a.prob(q, v) - 0.1).abs() < 1e-15);
            }
        }
        assert!((adversary_success(&m, &ps, &a).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn source_guess_against_aon() {
        let g = NetworkState::from_channels(5, (0..4).map(|i| (i, i + 1, 4, 2))).unwrap();
        let ps = enumerate_paths(&g, &PathPolicy::ShortestPaths).unwrap();
        let a = 0.3;
        let m = NoiseMechanism::all_or_nothing(a).unwrap();
        let ctx = AdversaryContext::new(5, &ps, &m).unwrap();
        let s = make_adversary(AdversaryKind::SourceGuess, &ctx).unwrap();
        let got = adversary_success(&m, &ps, &s).unwrap();
        assert!((got - (a + (1.0 - a) * 2.0 / 5.0)).abs() < 1e-12);
    }

    #[test]
    fn iid_black_branch() {
        // n = 5, L = 3: lambda = 4 and one outside node, so k = 2 > 1 picks black.
        let q = vec![oe(1, 2)];
        let mut st = AdversaryStrategy::new(5);
        iid_guess(&mut st, &q, 5, 3).unwrap();
        for v in [0, 3, 4] {
            assert!((st.prob(&q, v) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cloud_values() {
        assert!((cloud_value(5, 5, 0) - 0.2).abs() < 1e-15);
        assert!((cloud_value(1, 10, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn layout_mu() {
        let l = UserServerLayout::new(6, &[0, 1], &[(2, 0), (3, 0), (4, 1), (5, 1), (5, 0)]).unwrap();
        assert_eq!(l.min_users_per_server(), 2);
        assert!(UserServerLayout::new(3, &[0], &[(1, 2)]).is_err());
    }
}
