//! Permutation-learning baseline: a Gumbel-Sinkhorn soft permutation feeds a
//! triangular monotone flow whose likelihood is traded off against an l1
//! penalty on its Jacobian; the learned soft permutation is rounded with the
//! Hungarian algorithm.

use serde::{Deserialize, Serialize};

use super::hungarian::hungarian;
use super::sinkhorn::{gumbel_perturb, sinkhorn};
use crate::error::{Error, Result};
use crate::eval::CausalOrder;
use crate::flow::{
    flow_backward_into, flow_transform, std_normal_log_pdf, tmi_backward_into, tmi_forward, FlowSpec, TmiFlow,
    TmiGrads, JACOBIAN_STEP,
};
use crate::num::{adam_step, AdamState, Matrix, Mode, RngStream};
use crate::scm::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermConfig {
    pub t: f64,
    pub lambda: f64,
    pub sinkhorn_iters: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub gumbel: bool,
    pub flow: FlowSpec,
    pub jac_step: f64,
}

impl Default for PermConfig {
    fn default() -> Self {
        Self {
            t: 1e-4,
            lambda: 0.5,
            sinkhorn_iters: 20,
            epochs: 10,
            batch_size: 64,
            lr: 1e-3,
            gumbel: true,
            flow: FlowSpec::default(),
            jac_step: JACOBIAN_STEP,
        }
    }
}

impl PermConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::Argument(format!("temperature must be positive, got {}", self.t)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Argument(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.sinkhorn_iters == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Argument(
                "sinkhorn_iters, epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.jac_step > 0.0) {
            return Err(Error::Argument(
                "learning rate and jacobian step must be positive".into(),
            ));
        }
        self.flow.validate()
    }

    /// Central-difference step for logit gradients, relative to the temperature.
    fn logit_step(&self) -> f64 {
        1e-3 * self.t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermLearner {
    pub logits: Matrix,
    pub temperature: f64,
    pub tmi: TmiFlow,
}

impl PermLearner {
    pub fn new(d: usize, cfg: &PermConfig, rng: &RngStream) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            logits: Matrix::zeros(d, d),
            temperature: cfg.t,
            tmi: TmiFlow::near_identity(d, &cfg.flow, rng)?,
        })
    }

    pub fn d(&self) -> usize {
        self.logits.rows()
    }

    /// Noise-free soft permutation.
    pub fn soft_permutation(&self, iters: usize) -> Result<Matrix> {
        sinkhorn(&self.logits, self.temperature, iters)
    }
}

/// `x·Pᵀ` for one row: `out_a = Σ_b P_ab x_b`.
pub fn soft_permute(p: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    p.matvec(x)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PermLoss {
    pub nll: f64,
    pub penalty: f64,
    pub total: f64,
}

/// Accumulated l1 norm of the finite-difference TMI Jacobian at `x`.
/// Entries above the diagonal are structurally zero and skipped.
fn jacobian_l1(tmi: &TmiFlow, x: &[f64], h: f64) -> Result<f64> {
    let d = tmi.d();
    let mut total = 0.0;
    let mut probe = x.to_vec();
    for k in 0..d {
        for j in k..d {
            probe[k] = x[k] + h;
            let up = tmi.eval_coord(j, &probe)?.0;
            probe[k] = x[k] - h;
            let down = tmi.eval_coord(j, &probe)?.0;
            probe[k] = x[k];
            total += ((up - down) / (2.0 * h)).abs();
        }
    }
    Ok(total)
}

/// Loss pieces for a batch under an explicit soft permutation.
pub fn perm_loss_with(
    tmi: &TmiFlow,
    soft_perm: &Matrix,
    batch: &Matrix,
    lambda: f64,
    jac_step: f64,
    mode: Mode,
    mut rng: Option<&mut RngStream>,
) -> Result<PermLoss> {
    if batch.rows() == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    let scale = 1.0 / batch.rows() as f64;
    let (mut nll, mut penalty) = (0.0, 0.0);
    for r in 0..batch.rows() {
        let xt = soft_permute(soft_perm, batch.row(r))?;
        let (u, logdet, _) = tmi_forward(tmi, &xt, mode, rng.as_deref_mut())?;
        nll -= u.iter().map(|&v| std_normal_log_pdf(v)).sum::<f64>() + logdet;
        if lambda > 0.0 {
            penalty += jacobian_l1(tmi, &xt, jac_step)?;
        }
    }
    let (nll, penalty) = (nll * scale, penalty * scale);
    let total = nll + lambda * penalty;
    if !total.is_finite() {
        return Err(Error::Numeric(format!("non-finite permutation loss {total}")));
    }
    Ok(PermLoss { nll, penalty, total })
}

/// Loss of `learner` with its noise-free soft permutation.
pub fn perm_loss(
    learner: &PermLearner,
    batch: &Matrix,
    lambda: f64,
    sinkhorn_iters: usize,
    mode: Mode,
    rng: Option<&mut RngStream>,
) -> Result<f64> {
    let p = learner.soft_permutation(sinkhorn_iters)?;
    Ok(perm_loss_with(&learner.tmi, &p, batch, lambda, JACOBIAN_STEP, mode, rng)?.total)
}

/// Loss plus exact gradients w.r.t. the flow parameters and the soft permutation entries.
#[allow(clippy::too_many_arguments)]
pub fn perm_loss_grads(
    tmi: &TmiFlow,
    soft_perm: &Matrix,
    batch: &Matrix,
    lambda: f64,
    jac_step: f64,
    mode: Mode,
    mut rng: Option<&mut RngStream>,
    grads: &mut TmiGrads,
) -> Result<(PermLoss, Matrix)> {
    let d = tmi.d();
    if batch.rows() == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    let scale = 1.0 / batch.rows() as f64;
    let h = jac_step;
    let mut grad_p = Matrix::zeros(d, d);
    let (mut nll, mut penalty) = (0.0, 0.0);
    for r in 0..batch.rows() {
        let x = batch.row(r);
        let xt = soft_permute(soft_perm, x)?;
        let (u, logdet, cache) = tmi_forward(tmi, &xt, mode, rng.as_deref_mut())?;
        nll -= u.iter().map(|&v| std_normal_log_pdf(v)).sum::<f64>() + logdet;
        let gu: Vec<f64> = u.iter().map(|&v| v * scale).collect();
        let mut gx = tmi_backward_into(tmi, &cache, &gu, -scale, grads)?;

        if lambda > 0.0 {
            let mut probe = xt.clone();
            for k in 0..d {
                for j in k..d {
                    let flow = &tmi.coord_flows[j];
                    probe[k] = xt[k] + h;
                    let (up, _, c_up) = flow_transform(flow, probe[j], &probe[..j], Mode::Eval, None)?;
                    probe[k] = xt[k] - h;
                    let (down, _, c_down) = flow_transform(flow, probe[j], &probe[..j], Mode::Eval, None)?;
                    probe[k] = xt[k];
                    let jac = (up - down) / (2.0 * h);
                    penalty += jac.abs();
                    let s = jac.signum() * (jac != 0.0) as u8 as f64;
                    if s == 0.0 {
                        continue;
                    }
                    let g = lambda * scale * s / (2.0 * h);
                    for (cache, sign) in [(&c_up, 1.0), (&c_down, -1.0)] {
                        let (g_self, g_cond) = flow_backward_into(flow, cache, sign * g, 0.0, &mut grads.coords[j])?;
                        gx[j] += g_self;
                        gx[..j].iter_mut().zip(&g_cond).for_each(|(a, b)| *a += b);
                    }
                }
            }
        }
        for a in 0..d {
            for (b, &xb) in x.iter().enumerate() {
                let v = grad_p.get(a, b) + gx[a] * xb;
                grad_p.set(a, b, v);
            }
        }
    }
    let (nll, penalty) = (nll * scale, penalty * scale);
    let total = nll + lambda * penalty;
    if !total.is_finite() {
        return Err(Error::Numeric(format!("non-finite permutation loss {total}")));
    }
    Ok((PermLoss { nll, penalty, total }, grad_p))
}

/// Gradient w.r.t. the logits of `⟨grad_p, sinkhorn((logits + noise)/t)⟩`, by
/// central differences over every logit.
pub fn logit_gradient(
    logits: &Matrix,
    noise: Option<&Matrix>,
    grad_p: &Matrix,
    t: f64,
    iters: usize,
    step: f64,
) -> Result<Matrix> {
    let d = logits.rows();
    let mut base = logits.clone();
    if let Some(g) = noise {
        base.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
    }
    let contract = |m: &Matrix| -> f64 { m.data().iter().zip(grad_p.data()).map(|(a, b)| a * b).sum() };
    let mut out = Matrix::zeros(d, d);
    let mut probe = base.clone();
    for a in 0..d {
        for b in 0..d {
            let orig = base.get(a, b);
            probe.set(a, b, orig + step);
            let up = contract(&sinkhorn(&probe, t, iters)?);
            probe.set(a, b, orig - step);
            let down = contract(&sinkhorn(&probe, t, iters)?);
            probe.set(a, b, orig);
            out.set(a, b, (up - down) / (2.0 * step));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PermTrained {
    pub learner: PermLearner,
    /// Total loss of every optimizer step.
    pub losses: Vec<f64>,
}

/// Joint Adam updates of flow parameters and permutation logits.
///
/// Substreams of `rng`: 0 flow initialization, 1 shuffling, 2 dropout, 3 Gumbel noise.
pub fn train_perm(ds: &Dataset, cfg: &PermConfig, rng: &RngStream) -> Result<PermTrained> {
    cfg.validate()?;
    if !ds.is_standardized() {
        return Err(Error::Argument("permutation learning expects standardized data".into()));
    }
    let d = ds.d();
    let mut learner = PermLearner::new(d, cfg, &rng.substream(0))?;
    let mut shuffle_rng = rng.substream(1);
    let mut dropout_rng = rng.substream(2);
    let mut noise_rng = rng.substream(3);
    let mut flow_adam = AdamState::new(learner.tmi.num_params());
    let mut logit_adam = AdamState::new(d * d);
    let mut grads = learner.tmi.zero_grads();
    let mut flat = Vec::with_capacity(learner.tmi.num_params());
    let mut rows: Vec<usize> = (0..ds.n()).collect();
    let mut losses = Vec::new();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut rows);
        for chunk in rows.chunks(cfg.batch_size) {
            let batch = ds.values().select_rows(chunk);
            let noise = cfg.gumbel.then(|| gumbel_perturb(&Matrix::zeros(d, d), &mut noise_rng));
            let mut noisy = learner.logits.clone();
            if let Some(g) = &noise {
                noisy.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
            }
            let p = sinkhorn(&noisy, cfg.t, cfg.sinkhorn_iters)?;
            grads.clear();
            let (loss, grad_p) = perm_loss_grads(
                &learner.tmi,
                &p,
                &batch,
                cfg.lambda,
                cfg.jac_step,
                Mode::Train,
                Some(&mut dropout_rng),
                &mut grads,
            )
            .map_err(|e| match e {
                Error::Numeric(_) => Error::Training { step, loss: f64::NAN },
                other => other,
            })?;
            let g_logits = logit_gradient(
                &learner.logits,
                noise.as_ref(),
                &grad_p,
                cfg.t,
                cfg.sinkhorn_iters,
                cfg.logit_step(),
            )?;
            flat.clear();
            flat.extend(grads.values().copied());
            let diverged = |_| Error::Training { step, loss: loss.total };
            adam_step(learner.tmi.params_mut(), &flat, &mut flow_adam, cfg.lr).map_err(diverged)?;
            adam_step(
                learner.logits.data_mut().iter_mut(),
                g_logits.data(),
                &mut logit_adam,
                cfg.lr,
            )
            .map_err(diverged)?;
            losses.push(loss.total);
            step += 1;
        }
    }
    Ok(PermTrained { learner, losses })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermResult {
    pub order: CausalOrder,
    pub soft_permutation: Matrix,
    pub final_loss: f64,
}

/// Trains, rounds the final noise-free soft permutation, and reads off the order
/// (position `a` of the permuted vector holds variable `σ(a)`).
pub fn discover_order_perm(ds: &Dataset, cfg: &PermConfig, rng: &RngStream) -> Result<PermResult> {
    let trained = train_perm(ds, cfg, rng)?;
    let soft = trained.learner.soft_permutation(cfg.sinkhorn_iters)?;
    let sigma = hungarian(&soft)?;
    Ok(PermResult {
        order: CausalOrder::new(sigma)?,
        soft_permutation: soft,
        final_loss: trained.losses.last().copied().unwrap_or(f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::HALF_LOG_2PI;
    use crate::num::finite_diff_grad;
    use crate::scm::standardize;

    fn small_spec() -> FlowSpec {
        FlowSpec {
            hidden_units: 8,
            dropout: 0.0,
            ..FlowSpec::default()
        }
    }

    fn random_tmi(d: usize, seed: u64) -> TmiFlow {
        let mut rng = RngStream::new(seed);
        let mut t = TmiFlow::near_identity(d, &small_spec(), &rng.substream(0)).unwrap();
        t.params_mut().for_each(|p| *p += 0.3 * rng.normal());
        t
    }

    fn batch(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = RngStream::new(seed);
        Matrix::from_fn(n, d, |_, _| rng.normal())
    }

    #[test]
    fn lambda_zero_is_plain_nll_of_permuted_data() {
        let tmi = random_tmi(3, 1);
        let p = sinkhorn(&batch(3, 3, 2), 0.7, 20).unwrap();
        let x = batch(12, 3, 3);
        let loss = perm_loss_with(&tmi, &p, &x, 0.0, JACOBIAN_STEP, Mode::Eval, None).unwrap();
        let mut manual = 0.0;
        for r in 0..12 {
            let xt = p.matvec(x.row(r)).unwrap();
            let (u, ld) = tmi.eval(&xt).unwrap();
            manual += u.iter().map(|v| 0.5 * v * v + HALF_LOG_2PI).sum::<f64>() - ld;
        }
        assert!((loss.total - manual / 12.0).abs() < 1e-12);
        assert_eq!(loss.penalty, 0.0);
    }

    #[test]
    fn identity_flow_identity_permutation_penalty_is_d() {
        let d = 4;
        let tmi = TmiFlow::near_identity(d, &small_spec(), &RngStream::new(0)).unwrap();
        let x = batch(5, d, 1);
        let loss = perm_loss_with(&tmi, &Matrix::identity(d), &x, 1.0, JACOBIAN_STEP, Mode::Eval, None).unwrap();
        assert!((loss.penalty - d as f64).abs() < 1e-9, "penalty = {}", loss.penalty);
    }

    #[test]
    fn loss_matches_full_finite_difference_recomputation() {
        let d = 3;
        let tmi = random_tmi(d, 4);
        let p = sinkhorn(&batch(d, d, 5), 0.5, 20).unwrap();
        let x = batch(6, d, 6);
        let lambda = 0.7;
        let loss = perm_loss_with(&tmi, &p, &x, lambda, JACOBIAN_STEP, Mode::Eval, None).unwrap();
        let mut total = 0.0;
        for r in 0..6 {
            let xt = p.matvec(x.row(r)).unwrap();
            let (u, ld) = tmi.eval(&xt).unwrap();
            total += u.iter().map(|v| 0.5 * v * v + HALF_LOG_2PI).sum::<f64>() - ld;
            for j in 0..d {
                let row = finite_diff_grad(|z| tmi.eval(z).unwrap().0[j], &xt, JACOBIAN_STEP).unwrap();
                total += lambda * row.iter().map(|v| v.abs()).sum::<f64>();
            }
        }
        assert!((loss.total - total / 6.0).abs() < 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let d = 3;
        let tmi = random_tmi(d, 7);
        let logits = batch(d, d, 8);
        let t = 0.8;
        let p = sinkhorn(&logits, t, 20).unwrap();
        let x = batch(5, d, 9);
        let lambda = 0.4;
        let mut grads = tmi.zero_grads();
        let (_, grad_p) = perm_loss_grads(&tmi, &p, &x, lambda, JACOBIAN_STEP, Mode::Eval, None, &mut grads).unwrap();

        let flat: Vec<f64> = tmi.params().copied().collect();
        let fd = finite_diff_grad(
            |theta| {
                let mut s = tmi.clone();
                s.params_mut().zip(theta).for_each(|(a, b)| *a = *b);
                perm_loss_with(&s, &p, &x, lambda, JACOBIAN_STEP, Mode::Eval, None)
                    .unwrap()
                    .total
            },
            &flat,
            1e-6,
        )
        .unwrap();
        for (a, b) in grads.values().zip(&fd) {
            assert!((a - b).abs() <= 1e-4 * (1.0 + b.abs()), "{a} vs {b}");
        }

        let fd_p = finite_diff_grad(
            |entries| {
                let pm = Matrix::new(d, d, entries.to_vec()).unwrap();
                perm_loss_with(&tmi, &pm, &x, lambda, JACOBIAN_STEP, Mode::Eval, None)
                    .unwrap()
                    .total
            },
            p.data(),
            1e-6,
        )
        .unwrap();
        for (a, b) in grad_p.data().iter().zip(&fd_p) {
            assert!((a - b).abs() <= 1e-4 * (1.0 + b.abs()), "{a} vs {b}");
        }

        // logits end to end
        let g_logits = logit_gradient(&logits, None, &grad_p, t, 20, 1e-3 * t).unwrap();
        let fd_l = finite_diff_grad(
            |l| {
                let pm = sinkhorn(&Matrix::new(d, d, l.to_vec()).unwrap(), t, 20).unwrap();
                perm_loss_with(&tmi, &pm, &x, lambda, JACOBIAN_STEP, Mode::Eval, None)
                    .unwrap()
                    .total
            },
            logits.data(),
            1e-5,
        )
        .unwrap();
        for (a, b) in g_logits.data().iter().zip(&fd_l) {
            assert!((a - b).abs() <= 1e-4 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    fn standardized(n: usize, d: usize, seed: u64) -> Dataset {
        standardize(&Dataset::with_default_names(batch(n, d, seed)).unwrap()).unwrap()
    }

    #[test]
    fn training_stays_finite_and_yields_permutation() {
        let ds = standardized(64, 3, 10);
        let cfg = PermConfig {
            epochs: 2,
            batch_size: 16,
            flow: small_spec(),
            ..PermConfig::default()
        };
        for seed in 0..3 {
            let trained = train_perm(&ds, &cfg, &RngStream::new(seed)).unwrap();
            assert!(trained.losses.iter().all(|l| l.is_finite()));
            let res = discover_order_perm(&ds, &cfg, &RngStream::new(seed)).unwrap();
            assert_eq!(res.order.len(), 3);
        }
        let bad = PermConfig { epochs: 0, ..cfg };
        assert!(train_perm(&ds, &bad, &RngStream::new(0)).is_err());
    }

    #[test]
    fn perm_loss_uses_learner_state() {
        let cfg = PermConfig {
            flow: small_spec(),
            ..PermConfig::default()
        };
        let mut learner = PermLearner::new(3, &cfg, &RngStream::new(0)).unwrap();
        learner.logits = Matrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 });
        let x = batch(4, 3, 1);
        let total = perm_loss(&learner, &x, 1.0, 20, Mode::Eval, None).unwrap();
        let direct = perm_loss_with(
            &learner.tmi,
            &Matrix::identity(3),
            &x,
            1.0,
            JACOBIAN_STEP,
            Mode::Eval,
            None,
        )
        .unwrap()
        .total;
        assert!((total - direct).abs() < 1e-12);
    }
}
