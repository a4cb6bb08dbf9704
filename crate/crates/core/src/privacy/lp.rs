//! The minimax privacy LP:
//!
//! ```text
//! maximize t  s.t.  for every path P:  Σ_Q D[Q|P] (A[s(P)|Q] + A[d(P)|Q]) >= t
//!                   A[·|Q] a distribution over nodes, for every trace Q
//! ```
//!
//! Privacy is `1 - t*`. Before pivoting the instance is shrunk in three exact
//! steps:
//!
//! * node transpositions that map the path set onto itself and preserve the
//!   trace distributions are detected; the LP is invariant under the group they
//!   generate, so some optimum is constant on orbits and the LP is solved over
//!   orbits of paths, traces and (trace, node) pairs;
//! * within each trace block, columns dominated by another column are dropped;
//! * blocks left with a single column guess that node outright.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mechanism::{canonical_trace, TraceSource};
use crate::network::{NodeId, OrientedEdge, Path};

use super::simplex::{self, Problem};
use super::{hit_probabilities, AdversaryStrategy, LpStats, LpStatus, PrivacyResult, Trace};

#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    /// Cap on Σ_P |support(D[·|P])|.
    pub support_cap: usize,
    /// Cap on rows x columns of the dense tableau.
    pub tableau_cap: usize,
    /// Look for node transpositions that leave the instance invariant.
    pub symmetry: bool,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            support_cap: 100_000,
            tableau_cap: 60_000_000,
            symmetry: true,
        }
    }
}

// Rough operation budget for the transposition search.
const SYMMETRY_WORK_CAP: usize = 300_000_000;
const PROB_TOL: f64 = 1e-12;

pub fn privacy_lp<S: TraceSource + ?Sized>(
    source: &S,
    paths: &[Path],
    node_count: usize,
) -> Result<PrivacyResult> {
    privacy_lp_with(source, paths, node_count, &LpOptions::default())
}

/// A column over LP rows: (row, coefficient), sorted by row.
type Column = Vec<(usize, f64)>;

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    // Roots stay the smallest member.
    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            let (lo, hi) = (a.min(b), a.max(b));
            self.0[hi] = lo;
        }
    }
}

/// Paths, traces and the nonzero (trace, node) pairs of one instance.
struct Instance<'a> {
    paths: &'a [Path],
    traces: Vec<Trace>,
    block_of: HashMap<Trace, usize>,
    /// Per path: (block, probability), sorted by block.
    dists: Vec<Vec<(usize, f64)>>,
    pairs: Vec<(usize, NodeId)>,
    pair_of: HashMap<(usize, NodeId), usize>,
}

impl<'a> Instance<'a> {
    fn build<S: TraceSource + ?Sized>(source: &S, paths: &'a [Path], opts: &LpOptions) -> Result<Self> {
        let mut inst = Instance {
            paths,
            traces: vec![Vec::new()],
            block_of: HashMap::from([(Vec::new(), 0)]),
            dists: Vec::with_capacity(paths.len()),
            pairs: Vec::new(),
            pair_of: HashMap::new(),
        };
        let mut support = 0usize;
        for p in paths {
            let mut dist: Vec<(usize, f64)> = Vec::new();
            for (q, prob) in source.trace_distribution(p)? {
                if prob <= 0.0 {
                    continue;
                }
                support += 1;
                if support > opts.support_cap {
                    return Err(Error::SizeCap {
                        what: "total trace support",
                        actual: support,
                        limit: opts.support_cap,
                    });
                }
                let next = inst.traces.len();
                let b = *inst.block_of.entry(q.clone()).or_insert(next);
                if b == next {
                    inst.traces.push(q);
                }
                dist.push((b, prob));
                for v in [p.source(), p.destination()] {
                    let next = inst.pairs.len();
                    if *inst.pair_of.entry((b, v)).or_insert(next) == next {
                        inst.pairs.push((b, v));
                    }
                }
            }
            dist.sort_by_key(|e| e.0);
            dist.dedup_by(|later, first| {
                if later.0 == first.0 {
                    first.1 += later.1;
                    true
                } else {
                    false
                }
            });
            inst.dists.push(dist);
        }
        Ok(inst)
    }

    fn support(&self) -> usize {
        self.dists.iter().map(Vec::len).sum()
    }
}

fn swap(v: NodeId, i: NodeId, j: NodeId) -> NodeId {
    if v == i {
        j
    } else if v == j {
        i
    } else {
        v
    }
}

/// Images of paths, blocks and pairs under a transposition, or `None` if the
/// transposition does not leave the instance invariant.
struct Images {
    paths: Vec<usize>,
    blocks: Vec<usize>,
    pairs: Vec<usize>,
}

fn transposition_images(
    inst: &Instance,
    path_index: &HashMap<&[NodeId], usize>,
    i: NodeId,
    j: NodeId,
) -> Option<Images> {
    let map_edge = |e: &OrientedEdge| OrientedEdge::new(swap(e.from, i, j), swap(e.to, i, j));
    let mut blocks = Vec::with_capacity(inst.traces.len());
    for q in &inst.traces {
        let image = canonical_trace(q.iter().map(map_edge));
        blocks.push(*inst.block_of.get(&image)?);
    }
    let mut paths = Vec::with_capacity(inst.paths.len());
    let mut image = Vec::new();
    for (k, p) in inst.paths.iter().enumerate() {
        image.clear();
        image.extend(p.nodes().iter().map(|&v| swap(v, i, j)));
        let target = if image == p.nodes() { k } else { *path_index.get(image.as_slice())? };
        let want = &inst.dists[target];
        let got = &inst.dists[k];
        if want.len() != got.len() {
            return None;
        }
        let mut mapped: Vec<(usize, f64)> = got.iter().map(|&(b, x)| (blocks[b], x)).collect();
        mapped.sort_by_key(|e| e.0);
        if mapped
            .iter()
            .zip(want)
            .any(|(a, b)| a.0 != b.0 || (a.1 - b.1).abs() > PROB_TOL)
        {
            return None;
        }
        paths.push(target);
    }
    let mut pairs = Vec::with_capacity(inst.pairs.len());
    for &(b, v) in &inst.pairs {
        pairs.push(*inst.pair_of.get(&(blocks[b], swap(v, i, j)))?);
    }
    Some(Images { paths, blocks, pairs })
}

/// Orbit roots of paths, blocks and pairs under the group generated by all
/// invariant transpositions; also returns how many transpositions qualified.
fn orbits(inst: &Instance, node_count: usize, enabled: bool) -> (Dsu, Dsu, Dsu, usize) {
    let mut path_dsu = Dsu::new(inst.paths.len());
    let mut block_dsu = Dsu::new(inst.traces.len());
    let mut pair_dsu = Dsu::new(inst.pairs.len());
    let cost_per_try = inst.paths.len() + inst.support() * 4;
    let tries = node_count * node_count.saturating_sub(1) / 2;
    if !enabled || tries.saturating_mul(cost_per_try) > SYMMETRY_WORK_CAP {
        return (path_dsu, block_dsu, pair_dsu, 0);
    }
    // Cheap necessary condition: endpoint and interior counts agree.
    let mut sig = vec![(0usize, 0usize, 0usize); node_count];
    for p in inst.paths {
        sig[p.source()].0 += 1;
        sig[p.destination()].1 += 1;
        for &v in &p.nodes()[1..p.nodes().len() - 1] {
            sig[v].2 += 1;
        }
    }
    let path_index: HashMap<&[NodeId], usize> =
        inst.paths.iter().enumerate().map(|(k, p)| (p.nodes(), k)).collect();
    let mut found = 0;
    for i in 0..node_count {
        for j in i + 1..node_count {
            if sig[i] != sig[j] {
                continue;
            }
            let Some(img) = transposition_images(inst, &path_index, i, j) else {
                continue;
            };
            found += 1;
            for (a, &b) in img.paths.iter().enumerate() {
                path_dsu.union(a, b);
            }
            for (a, &b) in img.blocks.iter().enumerate() {
                block_dsu.union(a, b);
            }
            for (a, &b) in img.pairs.iter().enumerate() {
                pair_dsu.union(a, b);
            }
        }
    }
    (path_dsu, block_dsu, pair_dsu, found)
}

fn dominates(a: &Column, b: &Column) -> bool {
    let mut it = a.iter().peekable();
    for &(row, cb) in b {
        while it.peek().is_some_and(|e| e.0 < row) {
            it.next();
        }
        match it.peek() {
            Some(&&(r, ca)) if r == row && ca >= cb * (1.0 - 1e-12) => {}
            _ => return false,
        }
    }
    true
}

/// Indices of columns that survive dominance pruning (first of equal columns kept).
fn undominated(columns: &[Column]) -> Vec<usize> {
    let k = columns.len();
    let mut alive = vec![true; k];
    for b in 0..k {
        for a in 0..k {
            if a == b || !alive[a] {
                continue;
            }
            if dominates(&columns[a], &columns[b]) && (a < b || !dominates(&columns[b], &columns[a])) {
                alive[b] = false;
                break;
            }
        }
    }
    (0..k).filter(|&i| alive[i]).collect()
}

/// One simplex constraint `Σ y <= 1` over pair orbits; `y_O` is the mass the
/// orbit takes from each trace in the block orbit.
struct Block {
    orbits: Vec<usize>,
    columns: Vec<Column>,
}

pub fn privacy_lp_with<S: TraceSource + ?Sized>(
    source: &S,
    paths: &[Path],
    node_count: usize,
    opts: &LpOptions,
) -> Result<PrivacyResult> {
    if paths.is_empty() {
        return Err(Error::contract("privacy LP over an empty path set"));
    }
    if node_count < 2 {
        return Err(Error::contract("privacy needs at least two nodes"));
    }
    if let Some(p) = paths.iter().find(|p| p.nodes().iter().any(|&v| v >= node_count)) {
        return Err(Error::contract(format!("path {p} leaves the node range")));
    }

    let inst = Instance::build(source, paths, opts)?;
    let (mut path_dsu, mut block_dsu, mut pair_dsu, symmetries) = orbits(&inst, node_count, opts.symmetry);

    // LP rows: one per path orbit.
    let mut row_of_path = vec![usize::MAX; paths.len()];
    let mut reps = Vec::new();
    for k in 0..paths.len() {
        if path_dsu.find(k) == k {
            row_of_path[k] = reps.len();
            reps.push(k);
        }
    }

    // Pair orbits: root id -> dense index, weight = members inside the root block.
    let mut orbit_of_pair = vec![0usize; inst.pairs.len()];
    let mut orbit_index: HashMap<usize, usize> = HashMap::new();
    let mut orbit_block: Vec<usize> = Vec::new();
    let mut weight: Vec<f64> = Vec::new();
    for (k, &(b, _)) in inst.pairs.iter().enumerate() {
        let root = pair_dsu.find(k);
        let next = orbit_index.len();
        let o = *orbit_index.entry(root).or_insert(next);
        if o == next {
            orbit_block.push(block_dsu.find(inst.pairs[root].0));
            weight.push(0.0);
        }
        orbit_of_pair[k] = o;
        if block_dsu.find(b) == b {
            weight[o] += 1.0;
        }
    }

    // Coefficients on representative rows, normalised by orbit weight.
    let mut coef: Vec<HashMap<usize, f64>> = vec![HashMap::new(); weight.len()];
    for (row, &k) in reps.iter().enumerate() {
        let p = &paths[k];
        for &(b, prob) in &inst.dists[k] {
            for v in [p.source(), p.destination()] {
                let o = orbit_of_pair[inst.pair_of[&(b, v)]];
                *coef[o].entry(row).or_insert(0.0) += prob / weight[o];
            }
        }
    }

    let mut block_index: HashMap<usize, usize> = HashMap::new();
    let mut blocks: Vec<Block> = Vec::new();
    for (o, c) in coef.into_iter().enumerate() {
        let next = blocks.len();
        let b = *block_index.entry(orbit_block[o]).or_insert(next);
        if b == next {
            blocks.push(Block {
                orbits: Vec::new(),
                columns: Vec::new(),
            });
        }
        let mut col: Column = c.into_iter().collect();
        col.sort_unstable_by_key(|e| e.0);
        blocks[b].orbits.push(o);
        blocks[b].columns.push(col);
    }
    for b in &mut blocks {
        let keep = undominated(&b.columns);
        b.orbits = keep.iter().map(|&i| b.orbits[i]).collect();
        b.columns = keep.iter().map(|&i| std::mem::take(&mut b.columns[i])).collect();
    }

    // Fixed blocks contribute constants; the rest become LP variables.
    let mut constant = vec![0.0; reps.len()];
    let mut n_vars = 1; // variable 0 is t
    let mut first_var = Vec::with_capacity(blocks.len());
    for b in &blocks {
        first_var.push(n_vars);
        if b.columns.len() == 1 {
            for &(r, c) in &b.columns[0] {
                constant[r] += c;
            }
        } else {
            n_vars += b.columns.len();
        }
    }

    let mut stats = LpStats {
        paths: paths.len(),
        traces: inst.traces.len(),
        symmetries,
        ..LpStats::default()
    };

    // Mass per pair orbit.
    let mut mass = vec![0.0; weight.len()];
    for b in blocks.iter().filter(|b| b.columns.len() == 1) {
        mass[b.orbits[0]] = 1.0;
    }
    let status = if n_vars == 1 {
        LpStatus::Exact
    } else {
        let mut rows: Vec<(Vec<(usize, f64)>, f64)> =
            constant.iter().map(|&c| (vec![(0, 1.0)], c)).collect();
        for (b, blk) in blocks.iter().enumerate().filter(|(_, b)| b.columns.len() > 1) {
            for (k, col) in blk.columns.iter().enumerate() {
                for &(r, c) in col {
                    rows[r].0.push((first_var[b] + k, -c));
                }
            }
            rows.push(((0..blk.columns.len()).map(|k| (first_var[b] + k, 1.0)).collect(), 1.0));
        }
        stats.rows = rows.len();
        stats.columns = n_vars;
        if rows.len().saturating_mul(n_vars) > opts.tableau_cap {
            return Err(Error::SizeCap {
                what: "LP tableau entries",
                actual: rows.len() * n_vars,
                limit: opts.tableau_cap,
            });
        }
        let problem = Problem {
            n_vars,
            rows,
            objective: vec![(0, 1.0)],
        };
        let sol = simplex::maximize(&problem)?;
        stats.pivots = sol.pivots;
        for (b, blk) in blocks.iter().enumerate().filter(|(_, b)| b.columns.len() > 1) {
            for (k, &o) in blk.orbits.iter().enumerate() {
                mass[o] = sol.x[first_var[b] + k];
            }
        }
        // Dual bound: t* <= Σ_i y_i b_i, valid since the final basis is dual feasible.
        let dual_bound: f64 = sol
            .duals
            .iter()
            .zip(&problem.rows)
            .map(|(y, r)| y * r.1)
            .sum();
        LpStatus::Numeric(dual_bound.max(sol.objective))
    };

    let strategy = build_strategy(&inst, &orbit_of_pair, &mass, &weight, node_count)?;
    let hits = hit_probabilities(source, paths, &strategy)?;
    let success = hits.into_iter().fold(f64::INFINITY, f64::min);
    let lp_status = match status {
        LpStatus::Numeric(bound) => LpStatus::Numeric((bound - success).abs()),
        s => s,
    };
    Ok(PrivacyResult {
        privacy: (1.0 - success).clamp(0.0, 1.0),
        optimal_adversary: strategy,
        lp_status,
        stats,
    })
}

/// Spreads orbit masses back over traces; unassigned mass is spread uniformly
/// over all nodes, which can only raise every hit probability.
fn build_strategy(
    inst: &Instance,
    orbit_of_pair: &[usize],
    mass: &[f64],
    weight: &[f64],
    n: usize,
) -> Result<AdversaryStrategy> {
    let mut guesses: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); inst.traces.len()];
    for (k, &(b, v)) in inst.pairs.iter().enumerate() {
        let o = orbit_of_pair[k];
        let x = mass[o].max(0.0) / weight[o];
        if x > 0.0 {
            guesses[b].push((v, x));
        }
    }
    let mut strategy = AdversaryStrategy::new(n);
    for (trace, mut guess) in inst.traces.iter().zip(guesses) {
        let total: f64 = guess.iter().map(|e| e.1).sum();
        if total > 1.0 {
            guess.iter_mut().for_each(|e| e.1 /= total);
        }
        let leftover = (1.0 - total.min(1.0)).max(0.0) / n as f64;
        if leftover > 0.0 {
            guess.extend((0..n).map(|v| (v, leftover)));
        }
        // Renormalise away rounding.
        let s: f64 = guess.iter().map(|e| e.1).sum();
        if s <= 0.0 {
            strategy.set_uniform(trace.clone());
        } else {
            strategy.set(trace.clone(), guess.into_iter().map(|(v, x)| (v, x / s)))?;
        }
    }
    Ok(strategy)
}
