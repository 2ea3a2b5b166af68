//! Small fully connected network with leaky-ReLU hidden activations, inverted
//! dropout, and exact reverse-mode gradients.

use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use super::rng::RngStream;
use crate::error::{Error, Result};

/// Conditioner leaky-ReLU slope.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Weights are stored `out × in`; hidden layers use leaky-ReLU, the final layer is linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub leaky_slope: f64,
    pub dropout_rate: f64,
}

/// Gradient buffers shaped like [`MlpParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Activation record of one forward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    /// Input fed to each layer (post-activation and post-dropout for hidden layers).
    layer_inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    hidden_pre: Vec<Vec<f64>>,
    /// Per-unit dropout multipliers (0 or 1/(1-p)) for the hidden layers, train mode only.
    masks: Vec<Option<Vec<f64>>>,
}

#[inline]
fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

impl MlpParams {
    pub fn new(weights: Vec<Matrix>, biases: Vec<Vec<f64>>, leaky_slope: f64, dropout_rate: f64) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Argument(format!(
                "need one bias per layer and at least one layer, got {} weights / {} biases",
                weights.len(),
                biases.len()
            )));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != b.len() {
                return Err(Error::dim("bias length", w.rows(), b.len()));
            }
            if l > 0 && weights[l - 1].rows() != w.cols() {
                return Err(Error::dim("layer composition", weights[l - 1].rows(), w.cols()));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite bias".into()));
            }
        }
        if !(leaky_slope > 0.0 && leaky_slope.is_finite()) {
            return Err(Error::Argument(format!(
                "leaky slope must be positive, got {leaky_slope}"
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Argument(format!(
                "dropout rate must lie in [0,1), got {dropout_rate}"
            )));
        }
        Ok(Self {
            weights,
            biases,
            leaky_slope,
            dropout_rate,
        })
    }

    /// Glorot-uniform weights, zero biases. `sizes` lists every layer width
    /// including input and output.
    pub fn glorot(sizes: &[usize], leaky_slope: f64, dropout_rate: f64, rng: &mut RngStream) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Argument("an MLP needs at least input and output sizes".into()));
        }
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for win in sizes.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
            weights.push(Matrix::from_fn(fan_out, fan_in, |_, _| {
                rng.uniform_range(-limit, limit)
            }));
            biases.push(vec![0.0; fan_out]);
        }
        Self::new(weights, biases, leaky_slope, dropout_rate)
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.weights.len() - 1].rows()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.data().len() + b.len())
            .sum()
    }

    /// Flat view in the canonical order: layer by layer, weights then bias.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.data().iter().chain(b.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.data_mut().iter_mut().chain(b.iter_mut()))
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            weights: self.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Eval-mode forward pass without recording a cache.
    pub fn eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::dim("mlp input", self.input_dim(), input.len()));
        }
        let last = self.weights.len() - 1;
        let mut h = input.to_vec();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut next: Vec<f64> = (0..w.rows()).map(|r| dot(w.row(r), &h) + b[r]).collect();
            if l < last {
                next.iter_mut().for_each(|v| *v = leaky(*v, self.leaky_slope));
            }
            h = next;
        }
        Ok(h)
    }
}

impl MlpGrads {
    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values_mut().for_each(|v| *v *= s);
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.data().iter().chain(b.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.data_mut().iter_mut().chain(b.iter_mut()))
    }

    pub fn clear(&mut self) {
        self.values_mut().for_each(|v| *v = 0.0);
    }
}

/// Forward pass. In train mode with a positive dropout rate an `rng` is required.
pub fn mlp_forward(
    params: &MlpParams,
    input: &[f64],
    mode: Mode,
    mut rng: Option<&mut RngStream>,
) -> Result<(Vec<f64>, MlpCache)> {
    if input.len() != params.input_dim() {
        return Err(Error::dim("mlp input", params.input_dim(), input.len()));
    }
    let dropout = mode == Mode::Train && params.dropout_rate > 0.0;
    if dropout && rng.is_none() {
        return Err(Error::Argument("train-mode dropout needs a random stream".into()));
    }
    let keep = 1.0 - params.dropout_rate;
    let last = params.weights.len() - 1;
    let mut cache = MlpCache {
        layer_inputs: Vec::with_capacity(params.weights.len()),
        hidden_pre: Vec::with_capacity(last),
        masks: Vec::with_capacity(last),
    };
    let mut h = input.to_vec();
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        let pre: Vec<f64> = (0..w.rows()).map(|r| dot(w.row(r), &h) + b[r]).collect();
        cache.layer_inputs.push(h);
        if l == last {
            return Ok((pre, cache));
        }
        let mut act: Vec<f64> = pre.iter().map(|&v| leaky(v, params.leaky_slope)).collect();
        let mask = if dropout {
            let r = rng.as_deref_mut().expect("checked above");
            let m: Vec<f64> = (0..act.len())
                .map(|_| if r.bernoulli(keep) { 1.0 / keep } else { 0.0 })
                .collect();
            act.iter_mut().zip(&m).for_each(|(a, s)| *a *= s);
            Some(m)
        } else {
            None
        };
        cache.hidden_pre.push(pre);
        cache.masks.push(mask);
        h = act;
    }
    unreachable!("loop returns on the final layer")
}

/// Reverse pass accumulating parameter gradients into `grads`; returns the input gradient.
pub fn mlp_backward_into(
    params: &MlpParams,
    cache: &MlpCache,
    grad_output: &[f64],
    grads: &mut MlpGrads,
) -> Result<Vec<f64>> {
    let n = params.weights.len();
    if cache.layer_inputs.len() != n || cache.hidden_pre.len() + 1 != n {
        return Err(Error::Consistency(format!(
            "cache records {} layers, params have {n}",
            cache.layer_inputs.len()
        )));
    }
    if grads.weights.len() != n {
        return Err(Error::Consistency(
            "gradient buffer layer count differs from params".into(),
        ));
    }
    if grad_output.len() != params.output_dim() {
        return Err(Error::dim("mlp grad_output", params.output_dim(), grad_output.len()));
    }
    let mut delta = grad_output.to_vec();
    for l in (0..n).rev() {
        let w = &params.weights[l];
        let a = &cache.layer_inputs[l];
        if a.len() != w.cols() {
            return Err(Error::Consistency(format!("cached input of layer {l} has wrong width")));
        }
        let gw = &mut grads.weights[l];
        for (r, &dr) in delta.iter().enumerate() {
            if dr == 0.0 {
                continue;
            }
            for (g, &x) in gw.row_mut(r).iter_mut().zip(a) {
                *g += dr * x;
            }
        }
        grads.biases[l].iter_mut().zip(&delta).for_each(|(g, d)| *g += d);
        let mut ga = w.matvec_t(&delta)?;
        if l == 0 {
            return Ok(ga);
        }
        let pre = &cache.hidden_pre[l - 1];
        if let Some(mask) = &cache.masks[l - 1] {
            ga.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        ga.iter_mut()
            .zip(pre)
            .for_each(|(g, &p)| *g *= leaky_grad(p, params.leaky_slope));
        delta = ga;
    }
    unreachable!("loop returns on the first layer")
}

/// Reverse pass returning fresh parameter gradients and the input gradient.
pub fn mlp_backward(params: &MlpParams, cache: &MlpCache, grad_output: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
    let mut grads = params.zero_grads();
    let input_grad = mlp_backward_into(params, cache, grad_output, &mut grads)?;
    Ok((grads, input_grad))
}
