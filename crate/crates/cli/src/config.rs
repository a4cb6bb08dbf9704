//! JSON experiment configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pcnlab::privacy::PathPolicy;
use pcnlab::sim::{Heuristic, SimOptions, DEFAULT_WINDOW};
use pcnlab::topology::TopologySpec;
use pcnlab::workload::WorkloadSpec;
use pcnlab::{MechanismKind, NoiseMechanism, RouteView};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub topology: Option<TopologySpec>,
    /// Named topologies for comparison sweeps; one output file each.
    #[serde(default)]
    pub topologies: Option<BTreeMap<String, TopologySpec>>,
    #[serde(default)]
    pub workload: Option<WorkloadSpec>,
    #[serde(default)]
    pub mechanism: Option<MechanismConfig>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_replicas() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismConfig {
    pub kind: MechanismKind,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
}

impl MechanismConfig {
    pub fn grid(&self) -> Result<Vec<f64>> {
        let grid = match (&self.alpha, &self.alphas) {
            (Some(a), None) => vec![*a],
            (None, Some(g)) if !g.is_empty() => g.clone(),
            (None, Some(_)) => bail!("mechanism.alphas must not be empty"),
            _ => bail!("mechanism needs exactly one of `alpha` and `alphas`"),
        };
        for &a in &grid {
            if !(0.0..=1.0).contains(&a) {
                bail!("mechanism.alpha value {a} outside [0, 1]");
            }
        }
        Ok(grid)
    }

    pub fn at(&self, alpha: f64) -> Result<NoiseMechanism> {
        NoiseMechanism::new(self.kind, alpha).with_context(|| format!("mechanism.alpha = {alpha}"))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub min_value: Option<u64>,
    #[serde(default)]
    pub heuristic: Heuristic,
    #[serde(default = "default_view")]
    pub route_view: RouteView,
    #[serde(default)]
    pub record_truthfulness: bool,
    /// Regular-transaction counts at which channel balances are dumped.
    #[serde(default)]
    pub snapshot_at: Vec<u64>,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn default_view() -> RouteView {
    RouteView::SenderAware
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            window: DEFAULT_WINDOW,
            min_value: None,
            heuristic: Heuristic::None,
            route_view: default_view(),
            record_truthfulness: false,
            snapshot_at: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn options(&self, mechanism: NoiseMechanism) -> Result<SimOptions> {
        if self.window == 0 {
            bail!("sim.window must be at least 1");
        }
        if self.min_value == Some(0) {
            bail!("sim.min_value must be at least 1");
        }
        if let Heuristic::PeriodicRebalance { period: 0 } = self.heuristic {
            bail!("sim.heuristic.period must be at least 1");
        }
        let mut o = SimOptions::new(mechanism);
        o.window = self.window;
        o.min_value = self.min_value;
        o.heuristic = self.heuristic;
        o.route_view = self.route_view;
        o.record_truthfulness = self.record_truthfulness;
        o.snapshot_at = self.snapshot_at.clone();
        Ok(o)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_policy")]
    pub path_policy: PathPolicy,
    /// Solve the privacy LP next to the closed forms.
    #[serde(default = "default_true")]
    pub lp: bool,
    /// Path length for the complete-graph closed forms; taken from a
    /// fixed-length policy when absent.
    #[serde(default)]
    pub path_length: Option<usize>,
    /// Keep user-server channels out of every trace (user-server topologies).
    #[serde(default)]
    pub hide_user_channels: bool,
}

fn default_policy() -> PathPolicy {
    PathPolicy::ShortestPaths
}

fn default_true() -> bool {
    true
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            path_policy: default_policy(),
            lp: true,
            path_length: None,
            hide_user_channels: false,
        }
    }
}

impl AnalysisConfig {
    pub fn path_length(&self) -> Option<usize> {
        match self.path_policy {
            PathPolicy::FixedLength { length } => Some(length),
            _ => self.path_length,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn seed(&self, flag: Option<u64>) -> Result<u64> {
        flag.or(self.seed)
            .context("seed: no seed given (set `seed` in the config or pass --seed)")
    }

    pub fn topology(&self) -> Result<&TopologySpec> {
        self.topology.as_ref().context("topology: missing")
    }

    /// The single topology, or each named one.
    pub fn topology_set(&self) -> Result<Vec<(Option<String>, TopologySpec)>> {
        match (&self.topology, &self.topologies) {
            (Some(t), None) => Ok(vec![(None, t.clone())]),
            (None, Some(map)) if !map.is_empty() => {
                Ok(map.iter().map(|(k, v)| (Some(k.clone()), v.clone())).collect())
            }
            (None, Some(_)) => bail!("topologies: must not be empty"),
            (Some(_), Some(_)) => bail!("topology and topologies are mutually exclusive"),
            (None, None) => bail!("topology: missing"),
        }
    }

    pub fn workload(&self) -> Result<&WorkloadSpec> {
        self.workload.as_ref().context("workload: missing")
    }

    pub fn mechanism(&self) -> Result<&MechanismConfig> {
        self.mechanism.as_ref().context("mechanism: missing")
    }

    pub fn replicas(&self) -> Result<usize> {
        if self.replicas == 0 {
            bail!("replicas must be at least 1");
        }
        Ok(self.replicas)
    }
}
