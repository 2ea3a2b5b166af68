//! One-dimensional conditional flow: a stack of spline layers whose
//! parameters are produced by conditioner MLPs reading the conditioning vector.

use serde::{Deserialize, Serialize};

use super::spline::{raw_len, rq_spline_forward, rq_spline_grad, rq_spline_inverse, SplineRaw};
use crate::error::{Error, Result};
use crate::num::{mlp_backward_into, mlp_forward, MlpCache, MlpGrads, MlpParams, Mode, RngStream};

/// Finite-difference step used for input Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-4;

/// Architecture of a conditional flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub bins: usize,
    pub bound: f64,
    pub n_layers: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
}

impl Default for FlowSpec {
    fn default() -> Self {
        Self {
            bins: super::spline::DEFAULT_BINS,
            bound: super::spline::DEFAULT_BOUND,
            n_layers: 1,
            hidden_layers: 1,
            hidden_units: 128,
            dropout: 0.1,
            leaky_slope: crate::num::mlp::DEFAULT_LEAKY_SLOPE,
        }
    }
}

impl FlowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 1 || self.n_layers < 1 || self.hidden_units < 1 {
            return Err(Error::Argument(
                "flow needs at least one bin, one layer and one hidden unit".into(),
            ));
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(Error::Argument(format!(
                "tail bound must be positive, got {}",
                self.bound
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Argument(format!(
                "dropout must lie in [0,1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalFlow {
    pub layers: Vec<MlpParams>,
    pub bins: usize,
    pub bound: f64,
}

/// Per-layer gradient buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowGrads {
    pub layers: Vec<MlpGrads>,
}

impl FlowGrads {
    pub fn add_assign(&mut self, other: &FlowGrads) {
        self.layers
            .iter_mut()
            .zip(&other.layers)
            .for_each(|(a, b)| a.add_assign(b));
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(MlpGrads::values)
    }

    pub fn scale(&mut self, s: f64) {
        self.layers.iter_mut().for_each(|g| g.scale(s));
    }

    pub fn clear(&mut self) {
        self.layers.iter_mut().for_each(MlpGrads::clear);
    }
}

pub struct FlowCache {
    layers: Vec<LayerCache>,
}

struct LayerCache {
    mlp: MlpCache,
    x_in: f64,
    raw: Vec<f64>,
}

impl ConditionalFlow {
    /// Hidden layers get Glorot weights; the final conditioner layer has zero
    /// weights and biases that activate to the identity spline.
    pub fn near_identity(cond_dim: usize, spec: &FlowSpec, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let out = raw_len(spec.bins);
        let mut sizes = vec![cond_dim];
        sizes.extend(std::iter::repeat_n(spec.hidden_units, spec.hidden_layers));
        sizes.push(out);
        let identity_bias = SplineRaw::identity(spec.bins, spec.bound).to_flat();
        let mut layers = Vec::with_capacity(spec.n_layers);
        for l in 0..spec.n_layers {
            let mut mlp = MlpParams::glorot(&sizes, spec.leaky_slope, spec.dropout, &mut rng.substream(l as u64))?;
            let last = mlp.weights.len() - 1;
            mlp.weights[last].data_mut().iter_mut().for_each(|w| *w = 0.0);
            mlp.biases[last].clone_from(&identity_bias);
            layers.push(mlp);
        }
        Ok(Self {
            layers,
            bins: spec.bins,
            bound: spec.bound,
        })
    }

    pub fn cond_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(MlpParams::num_params).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(MlpParams::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(MlpParams::params_mut)
    }

    pub fn zero_grads(&self) -> FlowGrads {
        FlowGrads {
            layers: self.layers.iter().map(MlpParams::zero_grads).collect(),
        }
    }

    fn raw(&self, flat: &[f64]) -> Result<SplineRaw> {
        SplineRaw::from_flat(flat, self.bins, self.bound)
    }

    fn check_cond(&self, cond: &[f64]) -> Result<()> {
        if cond.len() != self.cond_dim() {
            return Err(Error::dim("flow conditioning vector", self.cond_dim(), cond.len()));
        }
        Ok(())
    }

    /// Eval-mode `(u, logdet)` without a cache.
    pub fn eval(&self, x: f64, cond: &[f64]) -> Result<(f64, f64)> {
        self.check_cond(cond)?;
        let mut u = x;
        let mut logdet = 0.0;
        for mlp in &self.layers {
            let raw = self.raw(&mlp.eval(cond)?)?;
            let (y, ld) = rq_spline_forward(&raw, u)?;
            u = y;
            logdet += ld;
        }
        Ok((u, logdet))
    }

    /// Eval-mode `x` with `eval(x, cond).0 == u`.
    pub fn inverse(&self, u: f64, cond: &[f64]) -> Result<f64> {
        self.check_cond(cond)?;
        let mut x = u;
        for mlp in self.layers.iter().rev() {
            x = rq_spline_inverse(&self.raw(&mlp.eval(cond)?)?, x)?;
        }
        Ok(x)
    }
}

/// `(u, logdet, cache)`; spline layers applied in order, each parameterized from `cond`.
pub fn flow_transform(
    flow: &ConditionalFlow,
    x: f64,
    cond: &[f64],
    mode: Mode,
    mut rng: Option<&mut RngStream>,
) -> Result<(f64, f64, FlowCache)> {
    flow.check_cond(cond)?;
    let mut u = x;
    let mut logdet = 0.0;
    let mut layers = Vec::with_capacity(flow.layers.len());
    for mlp in &flow.layers {
        let (raw, cache) = mlp_forward(mlp, cond, mode, rng.as_deref_mut())?;
        let (y, ld) = rq_spline_forward(&flow.raw(&raw)?, u)?;
        layers.push(LayerCache {
            mlp: cache,
            x_in: u,
            raw,
        });
        u = y;
        logdet += ld;
    }
    Ok((u, logdet, FlowCache { layers }))
}

/// Accumulates parameter gradients of `grad_u·u + grad_logdet·logdet` into
/// `grads`; returns `(∂/∂x, ∂/∂cond)`.
pub fn flow_backward_into(
    flow: &ConditionalFlow,
    cache: &FlowCache,
    grad_u: f64,
    grad_logdet: f64,
    grads: &mut FlowGrads,
) -> Result<(f64, Vec<f64>)> {
    if cache.layers.len() != flow.layers.len() {
        return Err(Error::Consistency("flow cache layer count differs from flow".into()));
    }
    let mut g_y = grad_u;
    let mut g_cond = vec![0.0; flow.cond_dim()];
    for l in (0..flow.layers.len()).rev() {
        let lc = &cache.layers[l];
        let sg = rq_spline_grad(&flow.raw(&lc.raw)?, lc.x_in)?;
        let g_raw: Vec<f64> = sg
            .dy_draw
            .iter()
            .zip(&sg.dlog_draw)
            .map(|(a, b)| g_y * a + grad_logdet * b)
            .collect();
        let gc = mlp_backward_into(&flow.layers[l], &lc.mlp, &g_raw, &mut grads.layers[l])?;
        g_cond.iter_mut().zip(&gc).for_each(|(a, b)| *a += b);
        g_y = g_y * sg.dy_dx + grad_logdet * sg.dlog_dx;
    }
    Ok((g_y, g_cond))
}

/// `∂T(x | cond)/∂cond_j` by central differences with step `h`, eval mode.
pub fn input_jacobian_with_step(flow: &ConditionalFlow, x: f64, cond: &[f64], h: f64) -> Result<Vec<f64>> {
    flow.check_cond(cond)?;
    let mut probe = cond.to_vec();
    let mut out = Vec::with_capacity(cond.len());
    for j in 0..cond.len() {
        probe[j] = cond[j] + h;
        let up = flow.eval(x, &probe)?.0;
        probe[j] = cond[j] - h;
        let down = flow.eval(x, &probe)?.0;
        probe[j] = cond[j];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Input Jacobian with the default step `1e-4`.
pub fn input_jacobian(flow: &ConditionalFlow, x: f64, cond: &[f64]) -> Result<Vec<f64>> {
    input_jacobian_with_step(flow, x, cond, JACOBIAN_STEP)
}

/// Input Jacobian by reverse mode, eval mode.
pub fn input_jacobian_exact(flow: &ConditionalFlow, x: f64, cond: &[f64]) -> Result<Vec<f64>> {
    let (_, _, cache) = flow_transform(flow, x, cond, Mode::Eval, None)?;
    let mut scratch = flow.zero_grads();
    Ok(flow_backward_into(flow, &cache, 1.0, 0.0, &mut scratch)?.1)
}
