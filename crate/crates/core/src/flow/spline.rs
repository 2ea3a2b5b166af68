//! Monotone rational-quadratic spline on `[-B, B]` with identity tails.
//!
//! Raw parameter layout (length `3K − 1`): `K` width logits, `K` height
//! logits, `K − 1` interior-derivative pre-activations. Boundary derivatives
//! are pinned to 1 so the map is C¹ across the tails.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 8;
pub const DEFAULT_BOUND: f64 = 3.0;
pub const MIN_BIN_WIDTH: f64 = 1e-3;
pub const MIN_BIN_HEIGHT: f64 = 1e-3;
pub const MIN_DERIVATIVE: f64 = 1e-3;

/// Pre-activation that makes an interior knot derivative exactly 1.
pub fn identity_raw_derivative() -> f64 {
    (1.0 - MIN_DERIVATIVE).exp_m1().ln()
}

pub fn raw_len(bins: usize) -> usize {
    3 * bins - 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineRaw {
    pub raw_widths: Vec<f64>,
    pub raw_heights: Vec<f64>,
    pub raw_derivs: Vec<f64>,
    pub bound: f64,
}

impl SplineRaw {
    /// Splits a flat `3K − 1` vector.
    pub fn from_flat(raw: &[f64], bins: usize, bound: f64) -> Result<Self> {
        if bins == 0 || raw.len() != raw_len(bins) {
            return Err(Error::dim("spline raw parameters", raw_len(bins.max(1)), raw.len()));
        }
        Ok(Self {
            raw_widths: raw[..bins].to_vec(),
            raw_heights: raw[bins..2 * bins].to_vec(),
            raw_derivs: raw[2 * bins..].to_vec(),
            bound,
        })
    }

    pub fn identity(bins: usize, bound: f64) -> Self {
        Self {
            raw_widths: vec![0.0; bins],
            raw_heights: vec![0.0; bins],
            raw_derivs: vec![identity_raw_derivative(); bins - 1],
            bound,
        }
    }

    pub fn bins(&self) -> usize {
        self.raw_widths.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.raw_widths.clone();
        v.extend_from_slice(&self.raw_heights);
        v.extend_from_slice(&self.raw_derivs);
        v
    }

    fn check(&self) -> Result<()> {
        let k = self.bins();
        if k == 0 || self.raw_heights.len() != k || self.raw_derivs.len() + 1 != k {
            return Err(Error::Argument("inconsistent spline parameter lengths".into()));
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(Error::Argument(format!(
                "tail bound must be positive, got {}",
                self.bound
            )));
        }
        let all = self.raw_widths.iter().chain(&self.raw_heights).chain(&self.raw_derivs);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite spline parameter".into()));
        }
        Ok(())
    }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activated knots.
struct Knots {
    xs: Vec<f64>,
    ys: Vec<f64>,
    derivs: Vec<f64>,
    width_probs: Vec<f64>,
    height_probs: Vec<f64>,
}

fn cumulative_knots(probs: &[f64], min_size: f64, bound: f64) -> Vec<f64> {
    let k = probs.len();
    let scale = 2.0 * bound * (1.0 - min_size * k as f64);
    let mut knots = Vec::with_capacity(k + 1);
    let mut acc = -bound;
    knots.push(acc);
    for &p in &probs[..k - 1] {
        acc += 2.0 * bound * min_size + scale * p;
        knots.push(acc);
    }
    knots.push(bound);
    knots
}

impl Knots {
    fn new(raw: &SplineRaw) -> Self {
        let k = raw.bins();
        let width_probs = softmax(&raw.raw_widths);
        let height_probs = softmax(&raw.raw_heights);
        let xs = cumulative_knots(&width_probs, MIN_BIN_WIDTH, raw.bound);
        let ys = cumulative_knots(&height_probs, MIN_BIN_HEIGHT, raw.bound);
        let mut derivs = Vec::with_capacity(k + 1);
        derivs.push(1.0);
        derivs.extend(raw.raw_derivs.iter().map(|&r| MIN_DERIVATIVE + softplus(r)));
        derivs.push(1.0);
        Self {
            xs,
            ys,
            derivs,
            width_probs,
            height_probs,
        }
    }

    fn bin_of(knots: &[f64], v: f64) -> usize {
        let k = knots.len() - 1;
        // first index with knots[i+1] > v
        let idx = knots[1..k].partition_point(|&t| t <= v);
        idx.min(k - 1)
    }
}

/// Values and local partials of one bin evaluation.
struct BinEval {
    y: f64,
    logd: f64,
    // partials of y and logd w.r.t. (x, x_k, w, y_k, h, d_k, d_{k+1})
    dy: [f64; 7],
    dl: [f64; 7],
}

fn eval_bin(x: f64, xk: f64, w: f64, yk: f64, h: f64, d0: f64, d1: f64) -> BinEval {
    let xi = ((x - xk) / w).clamp(0.0, 1.0);
    let s = h / w;
    let om = xi * (1.0 - xi);
    let c = d0 + d1 - 2.0 * s;
    let num = h * (s * xi * xi + d0 * om);
    let den = s + c * om;
    let y = yk + num / den;
    let q = d1 * xi * xi + 2.0 * s * om + d0 * (1.0 - xi) * (1.0 - xi);
    let logd = 2.0 * s.ln() + q.ln() - 2.0 * den.ln();

    // y partials through the intermediates (xi, s, h, d0, d1)
    let num_xi = h * (2.0 * s * xi + d0 * (1.0 - 2.0 * xi));
    let num_s = h * xi * xi;
    let num_h = s * xi * xi + d0 * om;
    let num_d0 = h * om;
    let den_xi = c * (1.0 - 2.0 * xi);
    let den_s = 1.0 - 2.0 * om;
    let den_d = om;
    let den2 = den * den;
    let y_xi = (num_xi * den - num * den_xi) / den2;
    let y_s = (num_s * den - num * den_s) / den2;
    let y_h = num_h / den;
    let y_d0 = (num_d0 * den - num * den_d) / den2;
    let y_d1 = -num * den_d / den2;

    let q_xi = 2.0 * d1 * xi + 2.0 * s * (1.0 - 2.0 * xi) - 2.0 * d0 * (1.0 - xi);
    let q_s = 2.0 * om;
    let l_xi = q_xi / q - 2.0 * den_xi / den;
    let l_s = 2.0 / s + q_s / q - 2.0 * den_s / den;
    let l_d0 = (1.0 - xi) * (1.0 - xi) / q - 2.0 * den_d / den;
    let l_d1 = xi * xi / q - 2.0 * den_d / den;

    let lift = |o_xi: f64, o_s: f64, o_h: f64, o_yk: f64, o_d0: f64, o_d1: f64| {
        [
            o_xi / w,
            -o_xi / w,
            -o_xi * xi / w - o_s * s / w,
            o_yk,
            o_h + o_s / w,
            o_d0,
            o_d1,
        ]
    };
    BinEval {
        y,
        logd,
        dy: lift(y_xi, y_s, y_h, 1.0, y_d0, y_d1),
        dl: lift(l_xi, l_s, 0.0, 0.0, l_d0, l_d1),
    }
}

/// Output, log-derivative and their partials w.r.t. the input and the flat raw vector.
#[derive(Clone, Debug)]
pub struct SplineGrad {
    pub y: f64,
    pub log_abs_deriv: f64,
    pub dy_dx: f64,
    pub dlog_dx: f64,
    pub dy_draw: Vec<f64>,
    pub dlog_draw: Vec<f64>,
}

/// Maps knot-level gradients back onto the softmax logits of one axis.
fn knots_to_logits(bin: usize, g_start: f64, g_size: f64, probs: &[f64], min_size: f64, bound: f64, out: &mut [f64]) {
    let k = probs.len();
    // size_j = 2B·min + 2B(1 − min·K)·p_j; start_bin = −B + Σ_{j<bin} size_j
    let mut g_sizes = vec![0.0; k];
    for g in g_sizes.iter_mut().take(bin) {
        *g += g_start;
    }
    g_sizes[bin] += g_size;
    let c = 2.0 * bound * (1.0 - min_size * k as f64);
    let dot: f64 = g_sizes.iter().zip(probs).map(|(g, p)| g * p).sum();
    for m in 0..k {
        out[m] = c * probs[m] * (g_sizes[m] - dot);
    }
}

/// Spline value, log-derivative and all first-order partials.
pub fn rq_spline_grad(raw: &SplineRaw, x: f64) -> Result<SplineGrad> {
    raw.check()?;
    let k = raw.bins();
    let n = raw_len(k);
    let b = raw.bound;
    if !x.is_finite() {
        return Err(Error::Numeric("non-finite spline input".into()));
    }
    if x < -b || x > b {
        return Ok(SplineGrad {
            y: x,
            log_abs_deriv: 0.0,
            dy_dx: 1.0,
            dlog_dx: 0.0,
            dy_draw: vec![0.0; n],
            dlog_draw: vec![0.0; n],
        });
    }
    let kn = Knots::new(raw);
    let bin = Knots::bin_of(&kn.xs, x);
    let w = kn.xs[bin + 1] - kn.xs[bin];
    let h = kn.ys[bin + 1] - kn.ys[bin];
    let e = eval_bin(x, kn.xs[bin], w, kn.ys[bin], h, kn.derivs[bin], kn.derivs[bin + 1]);

    let lift = |p: &[f64; 7]| {
        let mut g = vec![0.0; n];
        knots_to_logits(bin, p[1], p[2], &kn.width_probs, MIN_BIN_WIDTH, b, &mut g[..k]);
        knots_to_logits(bin, p[3], p[4], &kn.height_probs, MIN_BIN_HEIGHT, b, &mut g[k..2 * k]);
        // interior derivatives d_1..d_{K−1} ↔ raw_derivs[0..K−1]
        if bin >= 1 {
            g[2 * k + bin - 1] += p[5] * sigmoid(raw.raw_derivs[bin - 1]);
        }
        if bin + 1 < k {
            g[2 * k + bin] += p[6] * sigmoid(raw.raw_derivs[bin]);
        }
        g
    };
    Ok(SplineGrad {
        y: e.y,
        log_abs_deriv: e.logd,
        dy_dx: e.dy[0],
        dlog_dx: e.dl[0],
        dy_draw: lift(&e.dy),
        dlog_draw: lift(&e.dl),
    })
}

/// Forward map: `(y, log dy/dx)`.
pub fn rq_spline_forward(raw: &SplineRaw, x: f64) -> Result<(f64, f64)> {
    raw.check()?;
    if !x.is_finite() {
        return Err(Error::Numeric("non-finite spline input".into()));
    }
    let b = raw.bound;
    if x < -b || x > b {
        return Ok((x, 0.0));
    }
    let kn = Knots::new(raw);
    let bin = Knots::bin_of(&kn.xs, x);
    let w = kn.xs[bin + 1] - kn.xs[bin];
    let h = kn.ys[bin + 1] - kn.ys[bin];
    let e = eval_bin(x, kn.xs[bin], w, kn.ys[bin], h, kn.derivs[bin], kn.derivs[bin + 1]);
    Ok((e.y, e.logd))
}

/// Inverse map, solving the bin's quadratic in closed form.
pub fn rq_spline_inverse(raw: &SplineRaw, y: f64) -> Result<f64> {
    raw.check()?;
    if !y.is_finite() {
        return Err(Error::Numeric("non-finite spline input".into()));
    }
    let b = raw.bound;
    if y < -b || y > b {
        return Ok(y);
    }
    let kn = Knots::new(raw);
    let bin = Knots::bin_of(&kn.ys, y);
    let xk = kn.xs[bin];
    let w = kn.xs[bin + 1] - xk;
    let yk = kn.ys[bin];
    let h = kn.ys[bin + 1] - yk;
    let (d0, d1) = (kn.derivs[bin], kn.derivs[bin + 1]);
    let s = h / w;
    let dy = y - yk;
    let c = d0 + d1 - 2.0 * s;
    let qa = h * (s - d0) + dy * c;
    let qb = h * d0 - dy * c;
    let qc = -s * dy;
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
    let xi = (2.0 * qc / (-qb - disc.sqrt())).clamp(0.0, 1.0);
    let mut x = xk + xi * w;
    // one Newton polish step inside the bin
    let e = eval_bin(x, xk, w, yk, h, d0, d1);
    let slope = e.logd.exp();
    if slope.is_finite() && slope > 0.0 {
        x = (x - (e.y - y) / slope).clamp(xk, xk + w);
    }
    Ok(x)
}
