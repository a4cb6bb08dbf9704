//! Transaction streams: endpoint samplers, value distributions and the
//! zero-valued auxiliary stream.

use std::path::Path as FsPath;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Pareto, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NodeId, Transaction};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EndpointSpec {
    #[default]
    UniformPairs,
    /// Each node gets weight `high_weight` w.p. `high_prob`, else `low_weight`,
    /// once per workload; endpoints are drawn proportional to weight.
    WeightedPairs {
        #[serde(default = "default_low_weight")]
        low_weight: f64,
        #[serde(default = "default_high_weight")]
        high_weight: f64,
        #[serde(default = "default_high_prob")]
        high_prob: f64,
    },
}

fn default_low_weight() -> f64 {
    1.0
}
fn default_high_weight() -> f64 {
    16.0
}
fn default_high_prob() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValueSpec {
    /// Mean `v_m`, support starting at `v_m (beta - 1) / beta`.
    Pareto { beta: f64, v_m: f64 },
    /// Uniform on `[0, 2 mean]`.
    UniformMean { mean: f64 },
    Constant { value: u64 },
}

/// One atom of an explicit transaction distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxAtom {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub amount: u64,
    #[serde(default = "default_atom_weight")]
    pub weight: f64,
}

fn default_atom_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroStream {
    /// Expected zero-valued transactions per regular transaction.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    /// Number of regular transactions.
    pub count: usize,
    #[serde(default)]
    pub endpoints: EndpointSpec,
    #[serde(default)]
    pub values: Option<ValueSpec>,
    /// Draw (sender, receiver, amount) jointly from these atoms instead of
    /// `endpoints` and `values`.
    #[serde(default)]
    pub explicit: Option<Vec<TxAtom>>,
    #[serde(default)]
    pub zero_stream: Option<ZeroStream>,
}

impl WorkloadSpec {
    pub fn new(count: usize, endpoints: EndpointSpec, values: ValueSpec) -> Self {
        WorkloadSpec {
            count,
            endpoints,
            values: Some(values),
            explicit: None,
            zero_stream: None,
        }
    }

    pub fn explicit(count: usize, atoms: Vec<TxAtom>) -> Self {
        WorkloadSpec {
            count,
            endpoints: EndpointSpec::UniformPairs,
            values: None,
            explicit: Some(atoms),
            zero_stream: None,
        }
    }

    pub fn validate(&self, node_count: usize) -> Result<()> {
        if self.count == 0 {
            return Err(Error::domain("workload.count must be at least 1"));
        }
        if node_count < 2 {
            return Err(Error::domain("workloads need at least two nodes"));
        }
        match (&self.values, &self.explicit) {
            (Some(v), None) => validate_values(v)?,
            (None, Some(atoms)) => {
                if atoms.is_empty() {
                    return Err(Error::domain("workload.explicit is empty"));
                }
                for a in atoms {
                    if a.sender == a.receiver || a.sender.max(a.receiver) >= node_count {
                        return Err(Error::domain(format!(
                            "workload.explicit atom {}->{} is not a pair of distinct nodes",
                            a.sender, a.receiver
                        )));
                    }
                    if !(a.weight.is_finite() && a.weight > 0.0) {
                        return Err(Error::domain("workload.explicit weights must be positive"));
                    }
                }
            }
            _ => {
                return Err(Error::domain(
                    "workload needs exactly one of `values` and `explicit`",
                ))
            }
        }
        if let EndpointSpec::WeightedPairs {
            low_weight,
            high_weight,
            high_prob,
        } = self.endpoints
        {
            if !(low_weight > 0.0 && high_weight > 0.0 && (0.0..=1.0).contains(&high_prob)) {
                return Err(Error::domain("workload.endpoints weights out of range"));
            }
        }
        if let Some(z) = self.zero_stream {
            if !(z.rate.is_finite() && z.rate >= 0.0) {
                return Err(Error::domain("workload.zero_stream.rate must be non-negative"));
            }
        }
        Ok(())
    }

    /// Smallest amount a regular transaction can carry.
    pub fn min_value(&self) -> u64 {
        match (&self.values, &self.explicit) {
            (Some(v), _) => value_min(v),
            (None, Some(atoms)) => atoms.iter().map(|a| a.amount).min().unwrap_or(0),
            (None, None) => 0,
        }
    }
}

fn validate_values(v: &ValueSpec) -> Result<()> {
    match *v {
        ValueSpec::Pareto { beta, v_m } => {
            if !(beta > 1.0 && beta.is_finite()) {
                return Err(Error::domain(format!("Pareto beta {beta} must exceed 1")));
            }
            if !(v_m > 0.0 && v_m.is_finite()) {
                return Err(Error::domain(format!("Pareto v_m {v_m} must be positive")));
            }
        }
        ValueSpec::UniformMean { mean } => {
            if !(mean > 0.0 && mean.is_finite()) {
                return Err(Error::domain(format!("uniform mean {mean} must be positive")));
            }
        }
        ValueSpec::Constant { .. } => {}
    }
    Ok(())
}

/// Lower end of the Pareto support, `v_m (beta - 1) / beta`.
pub fn pareto_support_min(beta: f64, v_m: f64) -> f64 {
    v_m * (beta - 1.0) / beta
}

fn to_tokens(x: f64) -> u64 {
    // `as` saturates, which is what we want for the far tail.
    (x.round() as u64).max(1)
}

fn value_min(v: &ValueSpec) -> u64 {
    match *v {
        ValueSpec::Pareto { beta, v_m } => to_tokens(pareto_support_min(beta, v_m)),
        ValueSpec::UniformMean { .. } => 1,
        ValueSpec::Constant { value } => value,
    }
}

/// Value sampler with its distribution objects built once.
#[derive(Debug, Clone)]
pub enum ValueSampler {
    Pareto(Pareto<f64>),
    Uniform(f64),
    Constant(u64),
}

impl ValueSampler {
    pub fn new(spec: &ValueSpec) -> Result<Self> {
        validate_values(spec)?;
        Ok(match *spec {
            ValueSpec::Pareto { beta, v_m } => ValueSampler::Pareto(
                Pareto::new(pareto_support_min(beta, v_m), beta)
                    .map_err(|e| Error::domain(format!("Pareto parameters: {e}")))?,
            ),
            ValueSpec::UniformMean { mean } => ValueSampler::Uniform(2.0 * mean),
            ValueSpec::Constant { value } => ValueSampler::Constant(value),
        })
    }

    /// Integer tokens: nearest integer, at least 1 except for constants.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            ValueSampler::Pareto(d) => to_tokens(d.sample(rng)),
            ValueSampler::Uniform(hi) => to_tokens(rng.random::<f64>() * hi),
            ValueSampler::Constant(v) => *v,
        }
    }
}

pub fn sample_value<R: Rng + ?Sized>(spec: &ValueSpec, rng: &mut R) -> Result<u64> {
    Ok(ValueSampler::new(spec)?.sample(rng))
}

/// Endpoint sampler; weighted variants fix their node weights at construction.
#[derive(Debug, Clone)]
pub struct EndpointSampler {
    n: usize,
    node_weights: Option<Vec<f64>>,
    weights: Option<WeightedIndex<f64>>,
}

impl EndpointSampler {
    pub fn new<R: Rng + ?Sized>(spec: &EndpointSpec, node_count: usize, rng: &mut R) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::domain("endpoint sampling needs two nodes"));
        }
        let node_weights = match *spec {
            EndpointSpec::UniformPairs => None,
            EndpointSpec::WeightedPairs {
                low_weight,
                high_weight,
                high_prob,
            } => {
                let w: Vec<f64> = (0..node_count)
                    .map(|_| {
                        if rng.random::<f64>() < high_prob {
                            high_weight
                        } else {
                            low_weight
                        }
                    })
                    .collect();
                Some(w)
            }
        };
        let weights = match &node_weights {
            Some(w) => Some(WeightedIndex::new(w).map_err(|e| Error::domain(format!("endpoint weights: {e}")))?),
            None => None,
        };
        Ok(EndpointSampler {
            n: node_count,
            node_weights,
            weights,
        })
    }

    /// Per-node weights of a weighted sampler; `None` for uniform pairs.
    pub fn node_weights(&self) -> Option<&[f64]> {
        self.node_weights.as_deref()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (NodeId, NodeId) {
        match &self.weights {
            None => {
                let s = rng.random_range(0..self.n);
                let mut d = rng.random_range(0..self.n - 1);
                if d >= s {
                    d += 1;
                }
                (s, d)
            }
            Some(w) => loop {
                let (s, d) = (w.sample(rng), w.sample(rng));
                if s != d {
                    return (s, d);
                }
            },
        }
    }
}

/// Regular transactions in order, each followed by a Poisson number of
/// zero-valued transactions when a zero stream is configured.
pub fn build_workload<R: Rng + ?Sized>(
    spec: &WorkloadSpec,
    node_count: usize,
    rng: &mut R,
) -> Result<Vec<Transaction>> {
    spec.validate(node_count)?;
    let endpoints = EndpointSampler::new(&spec.endpoints, node_count, rng)?;
    let values = spec.values.as_ref().map(ValueSampler::new).transpose()?;
    let atoms = match &spec.explicit {
        Some(atoms) => Some(
            WeightedIndex::new(atoms.iter().map(|a| a.weight))
                .map_err(|e| Error::domain(format!("explicit weights: {e}")))?,
        ),
        None => None,
    };
    let zeros = match spec.zero_stream {
        Some(z) if z.rate > 0.0 => Some(
            Poisson::new(z.rate).map_err(|e| Error::domain(format!("zero stream rate: {e}")))?,
        ),
        _ => None,
    };

    let mut out = Vec::with_capacity(spec.count);
    let mut index = 0u64;
    for _ in 0..spec.count {
        let (s, d, amount) = match (&atoms, &values) {
            (Some(w), _) => {
                let a = spec.explicit.as_ref().expect("atoms imply explicit")[w.sample(rng)];
                (a.sender, a.receiver, a.amount)
            }
            (None, Some(v)) => {
                let (s, d) = endpoints.sample(rng);
                (s, d, v.sample(rng))
            }
            (None, None) => unreachable!("validated"),
        };
        out.push(Transaction::new(s, d, amount, index));
        index += 1;
        if let Some(p) = &zeros {
            let k = p.sample(rng) as u64;
            for _ in 0..k {
                let (s, d) = endpoints.sample(rng);
                out.push(Transaction::new(s, d, 0, index));
                index += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct TxRow {
    index: u64,
    sender: NodeId,
    receiver: NodeId,
    amount: u64,
}

pub fn save_workload(txs: &[Transaction], path: &FsPath) -> Result<()> {
    let io = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for t in txs {
        w.serialize(TxRow {
            index: t.index,
            sender: t.sender,
            receiver: t.receiver,
            amount: t.amount,
        })
        .map_err(io)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_workload(path: &FsPath) -> Result<Vec<Transaction>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    let mut out: Vec<Transaction> = Vec::new();
    for (i, row) in r.deserialize::<TxRow>().enumerate() {
        // Header is line 1.
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if row.sender == row.receiver {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "sender equals receiver".into(),
            });
        }
        if out.last().is_some_and(|t| t.index >= row.index) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "indices must be strictly increasing".into(),
            });
        }
        out.push(Transaction::new(row.sender, row.receiver, row.amount, row.index));
    }
    Ok(out)
}
