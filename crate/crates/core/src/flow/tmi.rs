//! Triangular monotone map: coordinate `j` is a conditional flow of `x_j`
//! given `x_0..x_{j−1}`.

use serde::{Deserialize, Serialize};

use super::conditional::{flow_backward_into, flow_transform, ConditionalFlow, FlowCache, FlowGrads, FlowSpec};
use crate::error::{Error, Result};
use crate::num::{Mode, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TmiFlow {
    pub coord_flows: Vec<ConditionalFlow>,
}

pub struct TmiCache {
    coords: Vec<FlowCache>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TmiGrads {
    pub coords: Vec<FlowGrads>,
}

impl TmiGrads {
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.coords.iter().flat_map(FlowGrads::values)
    }

    pub fn clear(&mut self) {
        self.coords.iter_mut().for_each(FlowGrads::clear);
    }
}

impl TmiFlow {
    pub fn near_identity(d: usize, spec: &FlowSpec, rng: &RngStream) -> Result<Self> {
        let coord_flows = (0..d)
            .map(|j| ConditionalFlow::near_identity(j, spec, &mut rng.substream(j as u64)))
            .collect::<Result<_>>()?;
        Ok(Self { coord_flows })
    }

    pub fn d(&self) -> usize {
        self.coord_flows.len()
    }

    pub fn num_params(&self) -> usize {
        self.coord_flows.iter().map(ConditionalFlow::num_params).sum()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.coord_flows.iter_mut().flat_map(ConditionalFlow::params_mut)
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.coord_flows.iter().flat_map(ConditionalFlow::params)
    }

    pub fn zero_grads(&self) -> TmiGrads {
        TmiGrads {
            coords: self.coord_flows.iter().map(ConditionalFlow::zero_grads).collect(),
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d() {
            return Err(Error::dim("tmi input", self.d(), x.len()));
        }
        Ok(())
    }

    /// Eval-mode coordinate `j` output.
    pub fn eval_coord(&self, j: usize, x: &[f64]) -> Result<(f64, f64)> {
        self.coord_flows[j].eval(x[j], &x[..j])
    }

    /// Eval-mode forward map.
    pub fn eval(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check(x)?;
        let mut u = Vec::with_capacity(x.len());
        let mut logdet = 0.0;
        for j in 0..self.d() {
            let (uj, ld) = self.eval_coord(j, x)?;
            u.push(uj);
            logdet += ld;
        }
        Ok((u, logdet))
    }
}

/// `u_j = T_j(x_j | x_{<j})`, `logdet = Σ_j logdet_j`.
pub fn tmi_forward(
    tmi: &TmiFlow,
    x: &[f64],
    mode: Mode,
    mut rng: Option<&mut RngStream>,
) -> Result<(Vec<f64>, f64, TmiCache)> {
    tmi.check(x)?;
    let mut u = Vec::with_capacity(x.len());
    let mut logdet = 0.0;
    let mut coords = Vec::with_capacity(x.len());
    for (j, flow) in tmi.coord_flows.iter().enumerate() {
        let (uj, ld, cache) = flow_transform(flow, x[j], &x[..j], mode, rng.as_deref_mut())?;
        u.push(uj);
        logdet += ld;
        coords.push(cache);
    }
    Ok((u, logdet, TmiCache { coords }))
}

/// Accumulates gradients of `Σ_j grad_u[j]·u_j + grad_logdet·logdet`; returns `∂/∂x`.
pub fn tmi_backward_into(
    tmi: &TmiFlow,
    cache: &TmiCache,
    grad_u: &[f64],
    grad_logdet: f64,
    grads: &mut TmiGrads,
) -> Result<Vec<f64>> {
    if grad_u.len() != tmi.d() || cache.coords.len() != tmi.d() {
        return Err(Error::dim("tmi gradient", tmi.d(), grad_u.len()));
    }
    let mut gx = vec![0.0; tmi.d()];
    for j in 0..tmi.d() {
        let (g_self, g_cond) = flow_backward_into(
            &tmi.coord_flows[j],
            &cache.coords[j],
            grad_u[j],
            grad_logdet,
            &mut grads.coords[j],
        )?;
        gx[j] += g_self;
        gx[..j].iter_mut().zip(&g_cond).for_each(|(a, b)| *a += b);
    }
    Ok(gx)
}
