//! Maximum-likelihood training of conditional flows under a standard Gaussian base.

use serde::{Deserialize, Serialize};

use super::conditional::{flow_backward_into, flow_transform, ConditionalFlow, FlowGrads, FlowSpec};
use crate::error::{Error, Result};
use crate::num::{adam_step, AdamState, Matrix, Mode, RngStream};

/// `½·log(2π)`.
pub const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard-normal log density.
#[inline]
pub fn std_normal_log_pdf(u: f64) -> f64 {
    -0.5 * u * u - HALF_LOG_2PI
}

/// Optimizer and architecture settings; defaults follow the reference configuration
/// (lr 1e-3, batch 64, 10 epochs, one spline layer, one hidden layer of 128 units, dropout 0.1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub flow: FlowSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 64,
            epochs: 10,
            flow: FlowSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Argument(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Argument("epochs must be at least 1".into()));
        }
        self.flow.validate()
    }
}

/// Training pairs `(x_r, cond_r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowData {
    pub x: Vec<f64>,
    pub cond: Matrix,
}

impl FlowData {
    pub fn new(x: Vec<f64>, cond: Matrix) -> Result<Self> {
        if x.len() != cond.rows() {
            return Err(Error::dim("flow data rows", x.len(), cond.rows()));
        }
        Ok(Self { x, cond })
    }

    /// Column `target` of `values` as `x`, all remaining columns (in order) as `cond`.
    pub fn from_columns(values: &Matrix, target: usize) -> Result<Self> {
        if target >= values.cols() {
            return Err(Error::Argument(format!("column {target} out of range")));
        }
        let others: Vec<usize> = (0..values.cols()).filter(|&c| c != target).collect();
        Self::new(values.column(target), values.select_columns(&others))
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Mean negative log-likelihood `−[log φ(u) + logdet]` over `rows`.
fn batch_nll(
    flow: &ConditionalFlow,
    data: &FlowData,
    rows: &[usize],
    mode: Mode,
    mut rng: Option<&mut RngStream>,
    mut grads: Option<&mut FlowGrads>,
) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let scale = 1.0 / rows.len() as f64;
    let mut total = 0.0;
    for &r in rows {
        let cond = data.cond.row(r);
        let (u, logdet, cache) = flow_transform(flow, data.x[r], cond, mode, rng.as_deref_mut())?;
        total -= std_normal_log_pdf(u) + logdet;
        if let Some(g) = grads.as_deref_mut() {
            flow_backward_into(flow, &cache, u * scale, -scale, g)?;
        }
    }
    let loss = total * scale;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss}")));
    }
    Ok(loss)
}

/// Mean NLL over every row of `data`.
pub fn nll_loss(flow: &ConditionalFlow, data: &FlowData, mode: Mode, rng: Option<&mut RngStream>) -> Result<f64> {
    let rows: Vec<usize> = (0..data.len()).collect();
    batch_nll(flow, data, &rows, mode, rng, None)
}

/// NLL and its parameter gradient over `rows`.
pub fn nll_with_grads(
    flow: &ConditionalFlow,
    data: &FlowData,
    rows: &[usize],
    mode: Mode,
    rng: Option<&mut RngStream>,
) -> Result<(f64, FlowGrads)> {
    let mut grads = flow.zero_grads();
    let loss = batch_nll(flow, data, rows, mode, rng, Some(&mut grads))?;
    Ok((loss, grads))
}

/// Trained flow plus the mean training loss of every epoch.
#[derive(Clone, Debug)]
pub struct TrainedFlow {
    pub flow: ConditionalFlow,
    pub epoch_losses: Vec<f64>,
}

/// Adam on shuffled minibatches (final short batch kept), train mode.
///
/// Substreams of `rng`: 0 initialization, 1 shuffling, 2 dropout.
pub fn train_flow_with_history(data: &FlowData, cfg: &TrainConfig, rng: &RngStream) -> Result<TrainedFlow> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Argument("no training data".into()));
    }
    let mut flow = ConditionalFlow::near_identity(data.cond.cols(), &cfg.flow, &mut rng.substream(0))?;
    let mut shuffle_rng = rng.substream(1);
    let mut dropout_rng = rng.substream(2);
    let mut adam = AdamState::new(flow.num_params());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = flow.zero_grads();
    let mut flat = Vec::with_capacity(flow.num_params());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            let loss = batch_nll(
                &flow,
                data,
                batch,
                Mode::Train,
                Some(&mut dropout_rng),
                Some(&mut grads),
            )
            .map_err(|e| match e {
                Error::Numeric(_) => Error::Training { step, loss: f64::NAN },
                other => other,
            })?;
            flat.clear();
            flat.extend(grads.values().copied());
            adam_step(flow.params_mut(), &flat, &mut adam, cfg.lr).map_err(|e| match e {
                Error::Numeric(_) => Error::Training { step, loss },
                other => other,
            })?;
            epoch_total += loss * batch.len() as f64;
            step += 1;
        }
        epoch_losses.push(epoch_total / data.len() as f64);
    }
    Ok(TrainedFlow { flow, epoch_losses })
}

pub fn train_flow(data: &FlowData, cfg: &TrainConfig, rng: &RngStream) -> Result<ConditionalFlow> {
    Ok(train_flow_with_history(data, cfg, rng)?.flow)
}
