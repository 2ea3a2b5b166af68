use crate::error::{Error, Result};
use crate::num::{Matrix, RngStream};

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Soft permutation: `exp(logits / t)` followed by `iters` rounds of row then
/// column normalization. Runs in log space so tiny temperatures do not overflow.
pub fn sinkhorn(logits: &Matrix, t: f64, iters: usize) -> Result<Matrix> {
    let (n, m) = logits.shape();
    if n != m {
        return Err(Error::dim("sinkhorn columns", n, m));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Argument(format!("temperature must be positive, got {t}")));
    }
    if iters == 0 {
        return Err(Error::Argument("sinkhorn needs at least one iteration".into()));
    }
    let mut log_p = logits.map(|v| v / t);
    for _ in 0..iters {
        for r in 0..n {
            let row = log_p.row_mut(r);
            let lse = log_sum_exp(row.iter().copied());
            row.iter_mut().for_each(|v| *v -= lse);
        }
        for c in 0..n {
            let lse = log_sum_exp((0..n).map(|r| log_p.get(r, c)));
            for r in 0..n {
                let v = log_p.get(r, c) - lse;
                log_p.set(r, c, v);
            }
        }
    }
    Ok(log_p.map(f64::exp))
}

/// Adds i.i.d. standard Gumbel noise to every entry.
pub fn gumbel_perturb(logits: &Matrix, rng: &mut RngStream) -> Matrix {
    let mut out = logits.clone();
    out.data_mut().iter_mut().for_each(|v| *v += rng.gumbel());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_logits_are_uniform() {
        for d in 1..7 {
            for t in [1e-4, 0.3, 5.0] {
                let p = sinkhorn(&Matrix::zeros(d, d), t, 3).unwrap();
                assert!(p.data().iter().all(|&v| (v - 1.0 / d as f64).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn dominant_diagonal_approaches_identity() {
        let logits = Matrix::from_fn(5, 5, |i, j| if i == j { 1.0 } else { 0.0 });
        let p = sinkhorn(&logits, 0.05, 50).unwrap();
        assert!(p.max_abs_diff(&Matrix::identity(5)) < 1e-3);
        // tiny temperature: exact in floating point
        let p = sinkhorn(&logits, 1e-4, 20).unwrap();
        assert_eq!(p, Matrix::identity(5));
    }

    #[test]
    fn doubly_stochastic_after_fifty_rounds() {
        let mut rng = RngStream::new(0);
        for trial in 0..100 {
            let d = 2 + trial % 8;
            let logits = Matrix::from_fn(d, d, |_, _| rng.uniform_range(-2.0, 2.0));
            let p = sinkhorn(&logits, 1.0, 50).unwrap();
            for i in 0..d {
                let rs: f64 = p.row(i).iter().sum();
                let cs: f64 = p.column(i).iter().sum();
                assert!((rs - 1.0).abs() < 1e-6 && (cs - 1.0).abs() < 1e-6);
            }
            assert!(p.data().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn gumbel_mean_is_euler_mascheroni() {
        let mut rng = RngStream::new(1);
        let n = 1_000_000;
        let m = Matrix::zeros(1000, 1000);
        let g = gumbel_perturb(&m, &mut rng);
        let mean = g.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 0.577_215_664_9).abs() < 0.01, "mean = {mean}");
        let again = gumbel_perturb(&Matrix::zeros(3, 3), &mut RngStream::new(5));
        assert_eq!(again, gumbel_perturb(&Matrix::zeros(3, 3), &mut RngStream::new(5)));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(sinkhorn(&Matrix::zeros(2, 3), 1.0, 1).is_err());
        assert!(sinkhorn(&Matrix::zeros(2, 2), 0.0, 1).is_err());
        assert!(sinkhorn(&Matrix::zeros(2, 2), 1.0, 0).is_err());
    }
}
