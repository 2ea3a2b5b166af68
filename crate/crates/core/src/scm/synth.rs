//! Monotonic SCM generator: one positive-weight leaky-ReLU MLP per node over
//! `(parents, noise)`, so each mechanism is strictly increasing in its noise.

use serde::{Deserialize, Serialize};

use super::dag::{default_edge_prob, sample_dag, Dag};
use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::num::{Matrix, MlpParams, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub d: usize,
    pub n: usize,
    pub edge_prob: f64,
    pub gen_layers: usize,
    pub gen_hidden_width: usize,
    pub weight_low: f64,
    pub weight_high: f64,
    pub leaky_slope: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Defaults: edge probability `min(1, 2/(d−1))`, 8 layers of width 16,
    /// weights in `[0.5, 2.0]`, leaky slope 0.2.
    pub fn new(d: usize, n: usize, seed: u64) -> Self {
        Self {
            d,
            n,
            edge_prob: default_edge_prob(d),
            gen_layers: 8,
            gen_hidden_width: 16,
            weight_low: 0.5,
            weight_high: 2.0,
            leaky_slope: 0.2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gen_layers == 0 || self.gen_hidden_width == 0 {
            return Err(Error::Argument(
                "generator needs at least one layer of positive width".into(),
            ));
        }
        if !(self.weight_low > 0.0 && self.weight_low <= self.weight_high && self.weight_high.is_finite()) {
            return Err(Error::Argument(format!(
                "weight range must satisfy 0 < low <= high, got [{}, {}]",
                self.weight_low, self.weight_high
            )));
        }
        if !(self.leaky_slope > 0.0) {
            return Err(Error::Argument("generator leaky slope must be positive".into()));
        }
        if self.n < 2 {
            return Err(Error::Argument("need at least 2 samples".into()));
        }
        Ok(())
    }
}

/// Ground-truth graph plus one mechanism per node.
///
/// Mechanism inputs are the node's parents in ascending index order followed
/// by its noise term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScm {
    pub dag: Dag,
    pub node_fns: Vec<MlpParams>,
}

impl SyntheticScm {
    /// Evaluates node `i` at the given parent values and noise.
    pub fn mechanism(&self, i: usize, parents: &[f64], noise: f64) -> Result<f64> {
        let mut input = parents.to_vec();
        input.push(noise);
        Ok(self.node_fns[i].eval(&input)?[0])
    }
}

/// Draws one mechanism per node.
///
/// Raw weights are uniform on `[weight_low, weight_high]` and divided by the
/// layer fan-in, so every weight is strictly positive while activations stay
/// on a comparable scale through deep stacks. Biases are uniform on `[-1, 1]`.
pub fn sample_scm(dag: &Dag, cfg: &SynthConfig, rng: &mut RngStream) -> Result<SyntheticScm> {
    cfg.validate()?;
    if cfg.d != dag.d() {
        return Err(Error::dim("scm variable count", dag.d(), cfg.d));
    }
    let mut node_fns = Vec::with_capacity(dag.d());
    for i in 0..dag.d() {
        let arity = dag.parents(i).len() + 1;
        let mut sizes = vec![arity];
        sizes.extend(std::iter::repeat_n(cfg.gen_hidden_width, cfg.gen_layers - 1));
        sizes.push(1);
        let mut node_rng = rng.substream(i as u64);
        let mut weights = Vec::with_capacity(cfg.gen_layers);
        let mut biases = Vec::with_capacity(cfg.gen_layers);
        for win in sizes.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let scale = 1.0 / fan_in as f64;
            weights.push(Matrix::from_fn(fan_out, fan_in, |_, _| {
                node_rng.uniform_range(cfg.weight_low, cfg.weight_high) * scale
            }));
            biases.push((0..fan_out).map(|_| node_rng.uniform_range(-1.0, 1.0)).collect());
        }
        node_fns.push(MlpParams::new(weights, biases, cfg.leaky_slope, 0.0)?);
    }
    Ok(SyntheticScm {
        dag: dag.clone(),
        node_fns,
    })
}

/// Samples `n` rows: `u ~ N(0, I)`, nodes evaluated in topological order.
/// The result is not standardized.
pub fn generate(scm: &SyntheticScm, n: usize, rng: &mut RngStream) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Argument(format!("need at least 2 samples, got {n}")));
    }
    let d = scm.dag.d();
    let topo = scm
        .dag
        .topological_order()
        .ok_or_else(|| Error::Validation("scm graph is cyclic".into()))?;
    let parents: Vec<Vec<usize>> = (0..d).map(|i| scm.dag.parents(i)).collect();
    let mut values = Matrix::zeros(n, d);
    for r in 0..n {
        let noise: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for &i in &topo {
            let pa: Vec<f64> = parents[i].iter().map(|&p| values.get(r, p)).collect();
            let v = scm.mechanism(i, &pa, noise[i])?;
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite value for variable {} in row {r}",
                    i + 1
                )));
            }
            values.set(r, i, v);
        }
    }
    Dataset::with_default_names(values)
}

/// Draws a graph, mechanisms and a raw dataset from `cfg.seed`.
pub fn synthesize(cfg: &SynthConfig) -> Result<(SyntheticScm, Dataset)> {
    let root = RngStream::new(cfg.seed);
    let dag = sample_dag(cfg.d, cfg.edge_prob, &mut root.substream(0))?;
    let scm = sample_scm(&dag, cfg, &mut root.substream(1))?;
    let data = generate(&scm, cfg.n, &mut root.substream(2))?;
    Ok((scm, data))
}
