//! Sequential simulation, deadlock detection, alleviation heuristics and
//! replicated runs.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::NoiseMechanism;
use crate::network::{ChannelState, NetworkState, Outcome, Path, RouteView, Transaction};
use crate::seed::{purpose, rng_from};
use crate::topology::{generate, TopologySpec};
use crate::workload::{build_workload, WorkloadSpec};

pub const DEFAULT_WINDOW: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Heuristic {
    #[default]
    None,
    /// Every `period` regular transactions, each deadlocked channel resets its
    /// public balances to an even split with probability 1/2.
    PeriodicRebalance { period: u64 },
    /// Zero-valued transactions publish the truth on their sampled trace and an
    /// even split on the rest of their path.
    ZeroTxRefresh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub mechanism: NoiseMechanism,
    /// Trailing window, in regular transactions, for the windowed success rate.
    pub window: usize,
    /// Deadlock threshold ℓ; `None` uses the smallest regular amount.
    pub min_value: Option<u64>,
    pub heuristic: Heuristic,
    pub route_view: RouteView,
    pub record_truthfulness: bool,
    pub record_outcomes: bool,
    /// Regular-transaction counts at which every channel's balances are recorded.
    pub snapshot_at: Vec<u64>,
}

impl SimOptions {
    pub fn new(mechanism: NoiseMechanism) -> Self {
        SimOptions {
            mechanism,
            window: DEFAULT_WINDOW,
            min_value: None,
            heuristic: Heuristic::None,
            route_view: RouteView::SenderAware,
            record_truthfulness: false,
            record_outcomes: false,
            snapshot_at: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::domain("sim.window must be at least 1"));
        }
        if let Heuristic::PeriodicRebalance { period: 0 } = self.heuristic {
            return Err(Error::domain("sim.heuristic.period must be at least 1"));
        }
        if self.min_value == Some(0) {
            return Err(Error::domain("sim.min_value must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Checkpoint {
    /// Regular transactions processed so far.
    pub t: u64,
    pub success_rate: f64,
    pub windowed_success_rate: f64,
    pub deadlocks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TxResult {
    Success,
    NoRoute,
    TrueBalance,
}

/// Truthfulness of one channel right after the regular transactions that used it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EdgeTruth {
    pub u: usize,
    pub v: usize,
    pub involved: u64,
    pub truthful: u64,
}

impl EdgeTruth {
    pub fn frequency(&self) -> Option<f64> {
        (self.involved > 0).then(|| self.truthful as f64 / self.involved as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelSnapshot {
    pub t: u64,
    /// `(true_uv, public_uv)` per channel, in channel order.
    pub balances: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimMetrics {
    pub regular: u64,
    pub successes: u64,
    /// Zero-valued transactions that found a route.
    pub zero_routed: u64,
    pub success_rate: f64,
    pub checkpoints: Vec<Checkpoint>,
    pub final_deadlocks: usize,
    pub truthfulness: Option<Vec<EdgeTruth>>,
    pub outcomes: Option<Vec<TxResult>>,
    pub snapshots: Vec<ChannelSnapshot>,
}

impl SimMetrics {
    pub fn final_windowed_success_rate(&self) -> f64 {
        self.checkpoints.last().map_or(0.0, |c| c.windowed_success_rate)
    }
}

/// No direction of the channel can be both selected (public ≥ ℓ) and funded
/// (true ≥ ℓ).
pub fn is_deadlocked(ch: &ChannelState, min_value: u64) -> bool {
    let (u, v) = (ch.u, ch.v);
    ch.true_balance(u).min(ch.public_balance(u)) < min_value
        && ch.true_balance(v).min(ch.public_balance(v)) < min_value
}

pub fn count_deadlocks(net: &NetworkState, min_value: u64) -> usize {
    net.channels().iter().filter(|c| is_deadlocked(c, min_value)).count()
}

/// Resets each deadlocked channel's public balances to an even split w.p. 1/2.
pub fn apply_periodic_rebalance<R: Rng + ?Sized>(net: &mut NetworkState, min_value: u64, rng: &mut R) {
    for idx in 0..net.channel_count() {
        if is_deadlocked(net.channel(idx), min_value) && rng.random_bool(0.5) {
            net.channel_mut(idx).publish_even_split();
        }
    }
}

/// Routes a zero-valued transaction and refreshes its path: truth on the
/// sampled trace, even split elsewhere. Returns the path, or `None` when the
/// receiver is unreachable (nothing changes then).
pub fn apply_zero_tx_refresh<R: Rng + ?Sized>(
    net: &mut NetworkState,
    tx: &Transaction,
    mechanism: &NoiseMechanism,
    view: RouteView,
    rng: &mut R,
) -> Result<Option<Path>> {
    if tx.amount != 0 {
        return Err(Error::contract("zero-transaction refresh with a nonzero amount"));
    }
    let Some(path) = net.find_route_with(tx, view, rng) else {
        return Ok(None);
    };
    let q = mechanism.sample_positions(path.len(), rng);
    refresh_path(net, &path, &q);
    Ok(Some(path))
}

/// Applies a refresh with an explicit trace (positions along `path`).
pub fn refresh_path(net: &mut NetworkState, path: &Path, positions: &[usize]) {
    for (i, e) in path.edges().enumerate() {
        let ch = net.channel_between(e.from, e.to).expect("route edges are channels");
        if positions.contains(&i) {
            net.channel_mut(ch).publish_truth();
        } else {
            net.channel_mut(ch).publish_even_split();
        }
    }
}

/// Processes `txs` in order on `net`.
pub fn run<R: Rng + ?Sized>(
    net: &mut NetworkState,
    txs: &[Transaction],
    opts: &SimOptions,
    rng: &mut R,
) -> Result<SimMetrics> {
    opts.validate()?;
    if txs.is_empty() {
        return Err(Error::contract("simulation over an empty workload"));
    }
    let min_value = opts
        .min_value
        .unwrap_or_else(|| txs.iter().map(|t| t.amount).filter(|&a| a > 0).min().unwrap_or(1));
    let step = (opts.window / 2).max(1) as u64;

    let mut m = SimMetrics {
        regular: 0,
        successes: 0,
        zero_routed: 0,
        success_rate: 0.0,
        checkpoints: Vec::new(),
        final_deadlocks: 0,
        truthfulness: opts.record_truthfulness.then(|| {
            net.channels()
                .iter()
                .map(|c| EdgeTruth {
                    u: c.u,
                    v: c.v,
                    involved: 0,
                    truthful: 0,
                })
                .collect()
        }),
        outcomes: opts.record_outcomes.then(Vec::new),
        snapshots: Vec::new(),
    };
    let mut recent: VecDeque<bool> = VecDeque::with_capacity(opts.window + 1);
    let mut recent_ok = 0usize;
    let mut snap_targets: Vec<u64> = opts.snapshot_at.clone();
    snap_targets.sort_unstable();
    snap_targets.dedup();
    let mut snap_next = 0;
    if snap_targets.first() == Some(&0) {
        m.snapshots.push(snapshot(net, 0));
        snap_next = 1;
    }

    for tx in txs {
        if tx.amount == 0 {
            let routed = if opts.heuristic == Heuristic::ZeroTxRefresh {
                apply_zero_tx_refresh(net, tx, &opts.mechanism, opts.route_view, rng)?.is_some()
            } else {
                let path = net.find_route_with(tx, opts.route_view, rng);
                path.is_some() && net.execute(tx, path.as_ref(), &opts.mechanism, rng)?.is_success()
            };
            m.zero_routed += routed as u64;
            continue;
        }

        let path = net.find_route_with(tx, opts.route_view, rng);
        let outcome = net.execute(tx, path.as_ref(), &opts.mechanism, rng)?;
        let ok = outcome.is_success();
        m.regular += 1;
        m.successes += ok as u64;
        if let (Some(truth), Some(p), true) = (m.truthfulness.as_mut(), path.as_ref(), ok) {
            for e in p.edges() {
                let ch = net.channel_between(e.from, e.to).expect("route edges are channels");
                truth[ch].involved += 1;
                truth[ch].truthful += net.channel(ch).is_truthful() as u64;
            }
        }
        if let Some(log) = m.outcomes.as_mut() {
            log.push(match outcome {
                Outcome::Succeeded(_) => TxResult::Success,
                Outcome::FailedNoRoute => TxResult::NoRoute,
                Outcome::FailedTrueBalance => TxResult::TrueBalance,
            });
        }
        recent.push_back(ok);
        recent_ok += ok as usize;
        if recent.len() > opts.window {
            recent_ok -= recent.pop_front().expect("nonempty") as usize;
        }

        if let Heuristic::PeriodicRebalance { period } = opts.heuristic {
            if m.regular % period == 0 {
                apply_periodic_rebalance(net, min_value, rng);
            }
        }
        if m.regular % step == 0 {
            m.checkpoints.push(checkpoint(&m, net, recent_ok, recent.len(), min_value));
        }
        while snap_targets.get(snap_next) == Some(&m.regular) {
            m.snapshots.push(snapshot(net, m.regular));
            snap_next += 1;
        }
    }
    if m.regular > 0 && m.checkpoints.last().map(|c| c.t) != Some(m.regular) {
        m.checkpoints.push(checkpoint(&m, net, recent_ok, recent.len(), min_value));
    }
    m.success_rate = if m.regular == 0 {
        0.0
    } else {
        m.successes as f64 / m.regular as f64
    };
    m.final_deadlocks = count_deadlocks(net, min_value);
    Ok(m)
}

fn checkpoint(m: &SimMetrics, net: &NetworkState, recent_ok: usize, recent_len: usize, min_value: u64) -> Checkpoint {
    Checkpoint {
        t: m.regular,
        success_rate: m.successes as f64 / m.regular as f64,
        windowed_success_rate: recent_ok as f64 / recent_len.max(1) as f64,
        deadlocks: count_deadlocks(net, min_value),
    }
}

fn snapshot(net: &NetworkState, t: u64) -> ChannelSnapshot {
    ChannelSnapshot {
        t,
        balances: net
            .channels()
            .iter()
            .map(|c| (c.true_balance(c.u), c.public_balance(c.u)))
            .collect(),
    }
}

/// Mean, sample standard deviation and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let n = xs.len();
        if n == 0 {
            return Summary {
                n,
                mean: f64::NAN,
                sd: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary {
            n,
            mean,
            sd,
            se: sd / (n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaStats {
    pub success_rate: Summary,
    pub windowed_success_rate: Summary,
    pub final_deadlocks: Summary,
    /// Fraction of replicas with at least one deadlocked channel at the end.
    pub deadlocked_fraction: f64,
}

impl ReplicaStats {
    pub fn from_runs(runs: &[SimMetrics]) -> Self {
        let col = |f: &dyn Fn(&SimMetrics) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
        ReplicaStats {
            success_rate: Summary::of(&col(&|m| m.success_rate)),
            windowed_success_rate: Summary::of(&col(&|m| m.final_windowed_success_rate())),
            final_deadlocks: Summary::of(&col(&|m| m.final_deadlocks as f64)),
            deadlocked_fraction: runs.iter().filter(|m| m.final_deadlocks > 0).count() as f64
                / runs.len().max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replicas {
    pub runs: Vec<SimMetrics>,
    pub stats: ReplicaStats,
}

/// Runs `k` independent replicas. Replica `i` draws its topology (when the topology
/// is random), workload and simulation randomness from seeds derived from
/// `(seed, i)`; results are ordered by replica index.
pub fn replicate(
    topology: &TopologySpec,
    workload: &WorkloadSpec,
    opts: &SimOptions,
    k: usize,
    seed: u64,
) -> Result<Replicas> {
    if k == 0 {
        return Err(Error::domain("replicas must be at least 1"));
    }
    opts.validate()?;
    let mut opts = opts.clone();
    if opts.min_value.is_none() {
        opts.min_value = Some(workload.min_value().max(1));
    }
    let fixed = if topology.is_random() {
        None
    } else {
        Some(generate(topology, &mut rng_from(seed, &[0, purpose::TOPOLOGY]))?.network)
    };
    let runs = (0..k)
        .into_par_iter()
        .map(|i| -> Result<SimMetrics> {
            let i = i as u64;
            let mut net = match &fixed {
                Some(n) => n.clone(),
                None => generate(topology, &mut rng_from(seed, &[i, purpose::TOPOLOGY]))?.network,
            };
            let txs = build_workload(workload, net.node_count(), &mut rng_from(seed, &[i, purpose::WORKLOAD]))?;
            run(&mut net, &txs, &opts, &mut rng_from(seed, &[i, purpose::SIMULATION]))
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = ReplicaStats::from_runs(&runs);
    Ok(Replicas { runs, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn chan(cap: u64, true_uv: u64, public_uv: u64) -> ChannelState {
        let mut c = ChannelState::new(0, 1, cap, true_uv).unwrap();
        c.set_public(0, public_uv).unwrap();
        c
    }

    #[test]
    fn deadlock_predicate() {
        assert!(is_deadlocked(&chan(2, 2, 0), 1));
        assert!(!is_deadlocked(&chan(10, 5, 5), 2));
        assert!(!is_deadlocked(&chan(10, 3, 0), 4));
    }

    #[test]
    fn perfect_utility_line() {
        let mut net = NetworkState::from_channels(3, [(0, 1, 100, 50), (1, 2, 100, 50)]).unwrap();
        let txs: Vec<Transaction> = (0..10).map(|i| Transaction::new(0, 2, 1, i)).collect();
        let opts = SimOptions::new(NoiseMechanism::all_or_nothing(1.0).unwrap());
        let m = run(&mut net, &txs, &opts, &mut rng_from(1, &[])).unwrap();
        assert_eq!(m.success_rate, 1.0);
        assert_eq!(m.checkpoints.last().unwrap().t, 10);
    }

    #[test]
    fn zero_refresh_with_empty_trace() {
        // Small two-hop line.
        let mut net = NetworkState::from_channels(3, [(0, 1, 2, 2), (1, 2, 4, 1)]).unwrap();
        net.channel_mut(0).set_public(0, 0).unwrap();
        assert!(is_deadlocked(net.channel(0), 1));
        let p = Path::new(vec![0, 1, 2]).unwrap();
        refresh_path(&mut net, &p, &[]);
        assert_eq!(net.channel(0).public_balance(0), 1);
        assert_eq!(net.channel(1).public_balance(1), 2);
        assert!(!is_deadlocked(net.channel(0), 1));
        assert_eq!(net.channel(0).true_balance(0), 2);
        refresh_path(&mut net, &p, &[0, 1]);
        assert!(net.channels().iter().all(|c| c.is_truthful()));
    }

    #[test]
    fn rebalance_frequency() {
        let mut rng = rng_from(2, &[]);
        let mut resets = 0;
        let trials = 10_000;
        for _ in 0..trials {
            let mut net = NetworkState::from_channels(2, [(0, 1, 2, 2)]).unwrap();
            net.channel_mut(0).set_public(0, 0).unwrap();
            apply_periodic_rebalance(&mut net, 1, &mut rng);
            if net.channel(0).public_balance(0) == 1 {
                resets += 1;
            }
        }
        let f = resets as f64 / trials as f64;
        assert!((f - 0.5).abs() < 3.0 * (0.25 / trials as f64).sqrt(), "{f}");
    }

    #[test]
    fn summary_stats() {
        let s = Summary::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.sd - 1.0).abs() < 1e-15);
        assert!((s.se - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(Summary::of(&[0.7]).sd, 0.0);
    }
}
