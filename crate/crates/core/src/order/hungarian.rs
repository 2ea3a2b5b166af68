//! Exact maximum-weight assignment.

use crate::error::{Error, Result};
use crate::num::Matrix;

/// Minimum-cost assignment on a square cost matrix (row `i` → column `p[i]`).
/// Shortest augmenting path with potentials, `O(n³)`.
fn min_cost_assignment(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    // 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    let total = assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (assign, total)
}

fn best_total(score: &Matrix, rows: &[usize], cols: &[usize]) -> f64 {
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| -score.get(r, c)).collect())
        .collect();
    -min_cost_assignment(&cost).1
}

/// Permutation `σ` maximizing `Σ_i score[i][σ(i)]`.
///
/// Among optimal assignments (up to a relative tolerance of `1e-12`) the
/// lexicographically smallest one is returned.
pub fn hungarian(score: &Matrix) -> Result<Vec<usize>> {
    let n = score.rows();
    if score.cols() != n {
        return Err(Error::dim("hungarian score columns", n, score.cols()));
    }
    if score.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let optimum = best_total(score, &all, &all);
    let scale = score.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * (1.0 + scale * n as f64);

    let mut assign = Vec::with_capacity(n);
    let mut free: Vec<usize> = all.clone();
    let mut fixed = 0.0;
    for row in 0..n {
        let rest_rows: Vec<usize> = (row + 1..n).collect();
        let mut chosen = None;
        for (idx, &c) in free.iter().enumerate() {
            let rest_cols: Vec<usize> = free.iter().copied().filter(|&x| x != c).collect();
            let total = fixed + score.get(row, c) + best_total(score, &rest_rows, &rest_cols);
            if total >= optimum - tol {
                chosen = Some(idx);
                break;
            }
        }
        // the unconstrained optimum always admits some completion
        let idx = chosen.unwrap_or(0);
        let c = free.remove(idx);
        fixed += score.get(row, c);
        assign.push(c);
    }
    Ok(assign)
}
