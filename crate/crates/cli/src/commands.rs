//! The four subcommands. Every output is a pure function of (config, seed).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pcnlab::mechanism::{utility_of, EdgeHiding};
use pcnlab::privacy::closed_form::{
    aon_privacy, alternating_privacy, iid_privacy_exact, iid_privacy_lower_bound, usm_multi_privacy_lb,
    usm_privacy,
};
use pcnlab::privacy::{enumerate_paths, privacy_lp, user_server_closure, LpStatus, UserServerLayout};
use pcnlab::seed::{purpose, rng_from};
use pcnlab::sim::{replicate, Replicas};
use pcnlab::topology::{degree_histogram, generate, snapshot_csv, Topology, TopologySpec};
use pcnlab::{MechanismKind, NetworkState, TraceSource};
use serde::Serialize;

use crate::config::{AnalysisConfig, ExperimentConfig};

pub struct RunContext {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out: PathBuf,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Like `write_csv`, but writes the header even when there are no rows.
fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        fs::write(path, header.join(",") + "\n").with_context(|| format!("writing {}", path.display()))?;
        return Ok(());
    }
    write_csv(path, rows)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// The topology replica 0 of a simulation would use.
fn base_topology(spec: &TopologySpec, seed: u64) -> Result<Topology> {
    generate(spec, &mut rng_from(seed, &[0, purpose::TOPOLOGY])).context("generating topology")
}

/// Complete-graph closed form for the mechanism, plus the lower bound where one exists.
fn closed_form(kind: MechanismKind, n: usize, len: Option<usize>, alpha: f64) -> Result<(f64, Option<f64>)> {
    Ok(match kind {
        MechanismKind::AllOrNothing => (aon_privacy(n, alpha)?, None),
        MechanismKind::Alternating => {
            let len = len.context("analysis.path_length is required for the alternating closed form")?;
            (alternating_privacy(n, len, alpha)?, None)
        }
        MechanismKind::Iid => {
            let len = len.context("analysis.path_length is required for the iid closed form")?;
            (iid_privacy_exact(n, len, alpha)?, Some(iid_privacy_lower_bound(n, len, alpha)?))
        }
    })
}

fn user_channels(net: &NetworkState, layout: &UserServerLayout) -> Vec<(usize, usize)> {
    net.channels()
        .iter()
        .filter(|c| !layout.is_server[c.u] || !layout.is_server[c.v])
        .map(|c| (c.u, c.v))
        .collect()
}

#[derive(Serialize)]
struct AnalyzeRow {
    mechanism: String,
    alpha: f64,
    utility: f64,
    privacy_closed_form: Option<f64>,
    privacy_lower_bound: Option<f64>,
    privacy_lp: Option<f64>,
    lp_status: String,
    bound_gap: f64,
}

pub fn analyze(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.config;
    let mech = cfg.mechanism()?;
    let grid = mech.grid()?;
    let topo = base_topology(cfg.topology()?, ctx.seed)?;
    let net = &topo.network;
    let n = net.node_count();
    let analysis: &AnalysisConfig = &cfg.analysis;

    let layout = if analysis.hide_user_channels {
        if mech.kind != MechanismKind::AllOrNothing {
            bail!("analysis.hide_user_channels only applies to the aon mechanism");
        }
        Some(
            topo.user_server
                .as_ref()
                .context("analysis.hide_user_channels needs a user_server topology")?,
        )
    } else {
        None
    };
    let paths = if analysis.lp {
        Some(enumerate_paths(net, &analysis.path_policy).and_then(|ps| match layout {
            Some(l) => user_server_closure(net, &ps, l),
            None => Ok(ps),
        }))
    } else {
        None
    };

    let mut rows = Vec::with_capacity(grid.len());
    for &alpha in &grid {
        let m = mech.at(alpha)?;
        let hidden;
        let source: &dyn TraceSource = match layout {
            Some(l) => {
                hidden = EdgeHiding::new(m, user_channels(net, l));
                &hidden
            }
            None => &m,
        };
        let (cf, lb) = match layout {
            Some(l) => {
                let servers = l.is_server.iter().filter(|&&s| s).count();
                let users = n - servers;
                let mu = l.min_users_per_server();
                let homes: usize = l.clouds.values().map(|c| c.len() - 1).sum();
                if homes > users {
                    (None, Some(usm_multi_privacy_lb(servers, users, mu, alpha)?))
                } else if servers == 2 && l.clouds.values().all(|c| c.len() == mu + 1) {
                    (Some(usm_privacy(servers, users, mu, alpha)?), None)
                } else {
                    // Uneven clouds or intra-cloud paths beyond two servers keep the LP above this.
                    (None, Some(usm_privacy(servers, users, mu, alpha)?))
                }
            }
            // Without a path length only the all-or-nothing form applies.
            None if m.kind() != MechanismKind::AllOrNothing && analysis.path_length().is_none() => (None, None),
            None => {
                let (cf, lb) = closed_form(m.kind(), n, analysis.path_length(), alpha)?;
                (Some(cf), lb)
            }
        };
        let (utility, lp, status) = match &paths {
            None => (alpha, None, "skipped".to_string()),
            Some(Err(e)) => (alpha, None, format!("error: {e}")),
            Some(Ok(ps)) => {
                let u = utility_of(source, ps)?;
                match privacy_lp(source, ps, n) {
                    Ok(r) => {
                        let s = match r.lp_status {
                            LpStatus::Exact => "exact".to_string(),
                            LpStatus::Numeric(gap) => format!("numeric:{gap:e}"),
                        };
                        (u, Some(r.privacy), s)
                    }
                    Err(e) => (u, None, format!("error: {e}")),
                }
            }
        };
        let privacy = lp.or(cf).or(lb).unwrap_or(f64::NAN);
        rows.push(AnalyzeRow {
            mechanism: m.kind().to_string(),
            alpha,
            utility,
            privacy_closed_form: cf,
            privacy_lower_bound: lb,
            privacy_lp: lp,
            lp_status: status,
            bound_gap: (1.0 - utility) - privacy,
        });
    }
    fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    write_csv(&ctx.out.join("analyze.csv"), rows)
}

#[derive(Serialize)]
struct MetricsRow {
    run_id: usize,
    t: u64,
    success_rate: f64,
    windowed_success_rate: f64,
    deadlocks: usize,
}

#[derive(Serialize)]
struct SummaryRow {
    alpha: f64,
    replicas: usize,
    success_rate: f64,
    sd_sr: f64,
    se_sr: f64,
    mean_windowed_sr: f64,
    mean_final_deadlocks: f64,
    deadlocked_fraction: f64,
}

#[derive(Serialize)]
struct ScatterRow {
    run_id: usize,
    t: u64,
    channel: usize,
    true_uv: u64,
    public_uv: u64,
}

#[derive(Serialize)]
struct TruthRow {
    run_id: usize,
    u: usize,
    v: usize,
    involved: u64,
    truthful: u64,
    frequency: Option<f64>,
}

fn run_replicas(ctx: &RunContext, topo: &TopologySpec, alpha: f64) -> Result<Replicas> {
    let cfg = &ctx.config;
    let mech = cfg.mechanism()?.at(alpha)?;
    let opts = cfg.sim.options(mech)?;
    replicate(topo, cfg.workload()?, &opts, cfg.replicas()?, ctx.seed).context("simulation failed")
}

pub fn simulate(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.config;
    let grid = cfg.mechanism()?.grid()?;
    if grid.len() != 1 {
        bail!("mechanism.alphas: simulate takes a single `alpha`; use sweep for grids");
    }
    let alpha = grid[0];
    let reps = run_replicas(ctx, cfg.topology()?, alpha)?;
    fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;

    let metrics = reps.runs.iter().enumerate().flat_map(|(i, m)| {
        m.checkpoints.iter().map(move |c| MetricsRow {
            run_id: i,
            t: c.t,
            success_rate: c.success_rate,
            windowed_success_rate: c.windowed_success_rate,
            deadlocks: c.deadlocks,
        })
    });
    write_csv(&ctx.out.join("metrics.csv"), metrics)?;

    let s = &reps.stats;
    let summary = SummaryRow {
        alpha,
        replicas: reps.runs.len(),
        success_rate: s.success_rate.mean,
        sd_sr: s.success_rate.sd,
        se_sr: s.success_rate.se,
        mean_windowed_sr: s.windowed_success_rate.mean,
        mean_final_deadlocks: s.final_deadlocks.mean,
        deadlocked_fraction: s.deadlocked_fraction,
    };
    write_csv(&ctx.out.join("summary.csv"), [summary])?;
    write_json(&ctx.out.join("summary.json"), &serde_json::json!({ "alpha": alpha, "stats": s }))?;

    if !cfg.sim.snapshot_at.is_empty() {
        let mut rows = Vec::new();
        for (i, m) in reps.runs.iter().enumerate() {
            for snap in &m.snapshots {
                for (ch, &(t_uv, p_uv)) in snap.balances.iter().enumerate() {
                    rows.push(ScatterRow {
                        run_id: i,
                        t: snap.t,
                        channel: ch,
                        true_uv: t_uv,
                        public_uv: p_uv,
                    });
                }
            }
        }
        write_csv_with_header(
            &ctx.out.join("scatter.csv"),
            &["run_id", "t", "channel", "true_uv", "public_uv"],
            &rows,
        )?;
    }
    if cfg.sim.record_truthfulness {
        let mut rows = Vec::new();
        for (i, m) in reps.runs.iter().enumerate() {
            for e in m.truthfulness.iter().flatten() {
                rows.push(TruthRow {
                    run_id: i,
                    u: e.u,
                    v: e.v,
                    involved: e.involved,
                    truthful: e.truthful,
                    frequency: e.frequency(),
                });
            }
        }
        write_csv_with_header(
            &ctx.out.join("truthfulness.csv"),
            &["run_id", "u", "v", "involved", "truthful", "frequency"],
            &rows,
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    alpha: f64,
    privacy_closed_form: Option<f64>,
    mean_sr: f64,
    sd_sr: f64,
    se_sr: f64,
    mean_windowed_sr: f64,
    sd_windowed_sr: f64,
    se_windowed_sr: f64,
    deadlocked_fraction: f64,
}

pub fn sweep(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.config;
    let mech = cfg.mechanism()?;
    let grid = mech.grid()?;
    let topologies = cfg.topology_set()?;
    fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    for (name, spec) in &topologies {
        let n = base_topology(spec, ctx.seed)?.network.node_count();
        let mut rows = Vec::with_capacity(grid.len());
        for &alpha in &grid {
            let reps = run_replicas(ctx, spec, alpha)?;
            let s = &reps.stats;
            rows.push(SweepRow {
                alpha,
                privacy_closed_form: closed_form(mech.kind, n, cfg.analysis.path_length(), alpha)
                    .ok()
                    .map(|c| c.0),
                mean_sr: s.success_rate.mean,
                sd_sr: s.success_rate.sd,
                se_sr: s.success_rate.se,
                mean_windowed_sr: s.windowed_success_rate.mean,
                sd_windowed_sr: s.windowed_success_rate.sd,
                se_windowed_sr: s.windowed_success_rate.se,
                deadlocked_fraction: s.deadlocked_fraction,
            });
        }
        let file = match name {
            Some(n) => format!("sweep_{n}.csv"),
            None => "sweep.csv".to_string(),
        };
        write_csv(&ctx.out.join(file), rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TopologyInfo {
    nodes: usize,
    channels: usize,
    connected: bool,
    degree_histogram: BTreeMap<usize, usize>,
    user_server: Option<UserServerInfo>,
}

#[derive(Serialize)]
struct UserServerInfo {
    servers: usize,
    users: usize,
    min_users_per_server: usize,
}

pub fn gen_topology(ctx: &RunContext) -> Result<()> {
    let topo = base_topology(ctx.config.topology()?, ctx.seed)?;
    let net = &topo.network;
    fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    let csv_path = ctx.out.join("topology.csv");
    fs::write(&csv_path, snapshot_csv(net, &topo.labels)?).with_context(|| format!("writing {}", csv_path.display()))?;
    let info = TopologyInfo {
        nodes: net.node_count(),
        channels: net.channel_count(),
        connected: net.is_connected(),
        degree_histogram: degree_histogram(net),
        user_server: topo.user_server.as_ref().map(|l| {
            let servers = l.is_server.iter().filter(|&&s| s).count();
            UserServerInfo {
                servers,
                users: net.node_count() - servers,
                min_users_per_server: l.min_users_per_server(),
            }
        }),
    };
    write_json(&ctx.out.join("topology.json"), &info)
}
