use crate::error::{Error, Result};

/// Central-difference gradient `(f(x + h e_j) − f(x − h e_j)) / 2h`.
pub fn finite_diff_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Argument(format!("step must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!("non-finite evaluation probing coordinate {j}")));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant() {
        let g = finite_diff_grad(|_| 4.2, &[1.0, 2.0, 3.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn sin_product() {
        let g = finite_diff_grad(|x| x[0].sin() * x[1], &[0.5, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0 * 0.5f64.cos()).abs() < 1e-6);
        assert!((g[1] - 0.5f64.sin()).abs() < 1e-6);
    }

    #[test]
    fn non_finite_is_an_error() {
        assert!(finite_diff_grad(|x| (x[0]).ln(), &[0.0], 1e-3).is_err());
        assert!(finite_diff_grad(|x| x[0], &[0.0], 0.0).is_err());
    }
}
