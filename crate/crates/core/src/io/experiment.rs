//! Seeded experiment runner and machine-readable result records.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::files::{load_dataset_csv, load_graph_csv, write_file};
use crate::error::{Error, Result};
use crate::eval::{aggregate, count_backward, CausalOrder, RunStats};
use crate::flow::{FlowSpec, TrainConfig, JACOBIAN_STEP};
use crate::num::{Matrix, RngStream};
use crate::order::{discover_order, discover_order_perm, JacAggregation, PermConfig, Round, SeqConfig};
use crate::scm::{default_edge_prob, standardize, synthesize, varsort_order, Dag, Dataset, SynthConfig};

/// Environment variable naming the default directory for result files.
pub const OUTPUT_DIR_ENV: &str = "ROOTFLOW_OUT_DIR";

/// `$ROOTFLOW_OUT_DIR`, falling back to `results`.
pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sequential,
    Permutation,
    Varsort,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Self::Sequential),
            "permutation" => Ok(Self::Permutation),
            "varsort" => Ok(Self::Varsort),
            other => Err(Error::Argument(format!("unknown method {other:?}"))),
        }
    }
}

/// One experiment: a method, a data source and a list of seeds.
///
/// Field names match the CLI flags. Missing fields take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub d: usize,
    pub n: usize,
    pub seeds: Vec<u64>,
    /// Defaults to `min(1, 2/(d-1))`.
    pub edge_prob: Option<f64>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub flow_layers: usize,
    pub mlp_hidden_layers: usize,
    pub hidden_units: usize,
    pub bins: usize,
    pub bound: f64,
    pub dropout: f64,
    pub jac_agg: JacAggregation,
    pub jac_step: f64,
    pub t: f64,
    pub lambda: f64,
    pub sinkhorn_iters: usize,
    pub gumbel: bool,
    /// Randomly relabel the variables of every seed's dataset and graph.
    pub shuffle: bool,
    /// Real dataset CSV; requires `graph`. Synthetic data is drawn otherwise.
    pub data: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let perm = PermConfig::default();
        Self {
            method: Method::Sequential,
            d: 4,
            n: 1000,
            seeds: (0..10).collect(),
            edge_prob: None,
            epochs: train.epochs,
            lr: train.lr,
            batch_size: train.batch_size,
            flow_layers: train.flow.n_layers,
            mlp_hidden_layers: train.flow.hidden_layers,
            hidden_units: train.flow.hidden_units,
            bins: train.flow.bins,
            bound: train.flow.bound,
            dropout: train.flow.dropout,
            jac_agg: JacAggregation::Max,
            jac_step: JACOBIAN_STEP,
            t: perm.t,
            lambda: perm.lambda,
            sinkhorn_iters: perm.sinkhorn_iters,
            gumbel: perm.gumbel,
            shuffle: true,
            data: None,
            graph: None,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn flow_spec(&self) -> FlowSpec {
        FlowSpec {
            bins: self.bins,
            bound: self.bound,
            n_layers: self.flow_layers,
            hidden_layers: self.mlp_hidden_layers,
            hidden_units: self.hidden_units,
            dropout: self.dropout,
            ..FlowSpec::default()
        }
    }

    pub fn seq_config(&self) -> SeqConfig {
        SeqConfig {
            train: TrainConfig {
                lr: self.lr,
                batch_size: self.batch_size,
                epochs: self.epochs,
                flow: self.flow_spec(),
            },
            jac_agg: self.jac_agg,
            jac_step: self.jac_step,
        }
    }

    pub fn perm_config(&self) -> PermConfig {
        PermConfig {
            t: self.t,
            lambda: self.lambda,
            sinkhorn_iters: self.sinkhorn_iters,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            gumbel: self.gumbel,
            flow: self.flow_spec(),
            jac_step: self.jac_step,
        }
    }

    pub fn synth_config(&self, seed: u64) -> SynthConfig {
        let mut cfg = SynthConfig::new(self.d, self.n, seed);
        cfg.edge_prob = self.edge_prob.unwrap_or_else(|| default_edge_prob(self.d));
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Argument("at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Argument("seeds must be distinct".into()));
        }
        match (&self.data, &self.graph) {
            (Some(_), None) | (None, Some(_)) => {
                return Err(Error::Argument("data and graph must be given together".into()))
            }
            (None, None) => {
                if self.d < 2 {
                    return Err(Error::Argument(format!("need at least 2 variables, got {}", self.d)));
                }
                self.synth_config(0).validate()?;
                if let Some(p) = self.edge_prob {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::Argument(format!("edge probability must lie in [0,1], got {p}")));
                    }
                }
            }
            _ => {}
        }
        if !(1..=3).contains(&self.flow_layers) || !(1..=3).contains(&self.mlp_hidden_layers) {
            return Err(Error::Argument(
                "flow_layers and mlp_hidden_layers must lie in 1..=3".into(),
            ));
        }
        match self.method {
            Method::Sequential => self.seq_config().train.validate(),
            Method::Permutation => self.perm_config().validate(),
            Method::Varsort => Ok(()),
        }
    }
}

/// Round diagnostics with one-based variable labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub remaining: Vec<usize>,
    pub chosen: usize,
    /// `(variable, max_jac)` per remaining variable.
    pub scores: Vec<(usize, f64)>,
}

impl From<&Round> for RoundRecord {
    fn from(r: &Round) -> Self {
        Self {
            remaining: r.remaining.iter().map(|v| v + 1).collect(),
            chosen: r.chosen + 1,
            scores: r.scores.iter().map(|s| (s.variable + 1, s.max_jac)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    /// Variable names after any shuffling; order indices refer to these.
    pub column_names: Vec<String>,
    /// Ground-truth adjacency after any shuffling.
    pub graph: Vec<Vec<u8>>,
    /// One-based.
    pub order: Option<Vec<usize>>,
    pub cb: Option<usize>,
    pub rounds: Option<Vec<RoundRecord>>,
    pub soft_permutation: Option<Matrix>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: ExperimentConfig,
    /// Sorted by seed.
    pub seeds: Vec<SeedRecord>,
    /// Over successful seeds; absent with fewer than two.
    pub aggregate: Option<RunStats>,
    pub wall_clock_seconds: f64,
}

impl ResultRecord {
    pub fn all_failed(&self) -> bool {
        self.seeds.iter().all(|s| s.error.is_some())
    }

    /// JSON text without the timing field.
    pub fn payload(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("wall_clock_seconds");
        }
        Ok(serde_json::to_string_pretty(&value)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, &(self.to_json()? + "\n"))
    }
}

/// Applies one uniformly random relabeling to the dataset columns and the graph.
///
/// Column `k` of the result is column `perm[k]` of the input.
pub fn shuffle_columns(ds: &Dataset, dag: &Dag, rng: &mut RngStream) -> Result<(Dataset, Dag, Vec<usize>)> {
    if ds.d() != dag.d() {
        return Err(Error::Dimension {
            what: "graph variables",
            expected: ds.d(),
            got: dag.d(),
        });
    }
    let perm = rng.permutation(ds.d());
    Ok((ds.select_columns(&perm), dag.permuted(&perm)?, perm))
}

enum Outcome {
    Sequential(Vec<Round>),
    Permutation(Matrix),
    Varsort,
}

fn graph_rows(dag: &Dag) -> Vec<Vec<u8>> {
    dag.to_rows()
        .into_iter()
        .map(|r| r.into_iter().map(u8::from).collect())
        .collect()
}

/// Seed `s`: data from `SynthConfig { seed: s }`, shuffle from substream 4 of
/// `RngStream::new(s)`, the method from substream 3.
fn run_seed(cfg: &ExperimentConfig, seed: u64, loaded: Option<&(Dataset, Dag)>) -> SeedRecord {
    let mut record = SeedRecord {
        seed,
        column_names: Vec::new(),
        graph: Vec::new(),
        order: None,
        cb: None,
        rounds: None,
        soft_permutation: None,
        error: None,
    };
    let result = (|| -> Result<(CausalOrder, usize, Outcome)> {
        let root = RngStream::new(seed);
        let (raw, dag) = match loaded {
            Some((ds, dag)) => (ds.clone(), dag.clone()),
            None => {
                let (scm, ds) = synthesize(&cfg.synth_config(seed))?;
                (ds, scm.dag)
            }
        };
        let (raw, dag) = if cfg.shuffle {
            let (ds, dag, _) = shuffle_columns(&raw, &dag, &mut root.substream(4))?;
            (ds, dag)
        } else {
            (raw, dag)
        };
        record.column_names = raw.column_names().to_vec();
        record.graph = graph_rows(&dag);
        let method_rng = root.substream(3);
        let (order, outcome) = match cfg.method {
            Method::Sequential => {
                let res = discover_order(&standardize(&raw)?, &cfg.seq_config(), &method_rng)?;
                (res.order, Outcome::Sequential(res.rounds))
            }
            Method::Permutation => {
                let res = discover_order_perm(&standardize(&raw)?, &cfg.perm_config(), &method_rng)?;
                (res.order, Outcome::Permutation(res.soft_permutation))
            }
            Method::Varsort => (varsort_order(&raw), Outcome::Varsort),
        };
        let cb = count_backward(&order, &dag)?;
        Ok((order, cb, outcome))
    })();
    match result {
        Ok((order, cb, outcome)) => {
            record.order = Some(order.to_one_based());
            record.cb = Some(cb);
            match outcome {
                Outcome::Sequential(rounds) => record.rounds = Some(rounds.iter().map(RoundRecord::from).collect()),
                Outcome::Permutation(p) => record.soft_permutation = Some(p),
                Outcome::Varsort => {}
            }
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// Runs every seed (in parallel) and aggregates Count Backward over the
/// successful ones. Per-seed failures are recorded, not raised.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let loaded = match (&cfg.data, &cfg.graph) {
        (Some(data), Some(graph)) => {
            let ds = load_dataset_csv(data)?;
            let dag = load_graph_csv(graph, Some(ds.column_names()))?;
            Some((ds, dag))
        }
        _ => None,
    };
    let mut seeds: Vec<SeedRecord> = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s, loaded.as_ref()))
        .collect();
    seeds.sort_by_key(|s| s.seed);
    let cbs: Vec<f64> = seeds.iter().filter_map(|s| s.cb.map(|c| c as f64)).collect();
    Ok(ResultRecord {
        config: cfg.clone(),
        aggregate: aggregate(&cbs).ok(),
        seeds,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}
