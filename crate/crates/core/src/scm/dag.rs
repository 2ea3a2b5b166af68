use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::RngStream;

/// Directed acyclic graph over `d` variables; `adj[i][j]` means an edge `i → j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dag {
    d: usize,
    adj: Vec<bool>,
}

impl Dag {
    pub fn empty(d: usize) -> Self {
        Self {
            d,
            adj: vec![false; d * d],
        }
    }

    /// `0 → 1 → … → d−1`.
    pub fn chain(d: usize) -> Self {
        let mut g = Self::empty(d);
        for i in 1..d {
            g.adj[(i - 1) * d + i] = true;
        }
        g
    }

    /// Validates square shape, no self-loops and acyclicity.
    pub fn from_adjacency(rows: &[Vec<bool>]) -> Result<Self> {
        let d = rows.len();
        let mut adj = Vec::with_capacity(d * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::dim("adjacency row", d, r.len()));
            }
            if r[i] {
                return Err(Error::Validation(format!("self-loop on variable {}", i + 1)));
            }
            adj.extend_from_slice(r);
        }
        let g = Self { d, adj };
        if g.topological_order().is_none() {
            return Err(Error::Validation("adjacency matrix contains a cycle".into()));
        }
        Ok(g)
    }

    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut rows = vec![vec![false; d]; d];
        for &(i, j) in edges {
            if i >= d || j >= d {
                return Err(Error::Argument(format!("edge ({i}, {j}) out of range for d = {d}")));
            }
            rows[i][j] = true;
        }
        Self::from_adjacency(&rows)
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adj[from * self.d + to]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.d).flat_map(move |i| (0..self.d).filter(move |&j| self.has_edge(i, j)).map(move |j| (i, j)))
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count()
    }

    pub fn parents(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.has_edge(j, i)).collect()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.has_edge(i, j)).collect()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.d).filter(|&i| self.parents(i).is_empty()).collect()
    }

    /// All variables reachable from `i` along directed edges, excluding `i`.
    pub fn descendants(&self, i: usize) -> Vec<usize> {
        let mut seen = vec![false; self.d];
        let mut queue = VecDeque::from(self.children(i));
        while let Some(v) = queue.pop_front() {
            if !seen[v] {
                seen[v] = true;
                queue.extend(self.children(v).into_iter().filter(|&c| !seen[c]));
            }
        }
        (0..self.d).filter(|&v| seen[v]).collect()
    }

    /// Kahn's algorithm, smallest available index first. `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indeg: Vec<usize> = (0..self.d).map(|i| self.parents(i).len()).collect();
        let mut ready: std::collections::BTreeSet<usize> = (0..self.d).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.d);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for c in self.children(v) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == self.d).then_some(order)
    }

    /// Relabels variables: old variable `perm[k]` becomes new variable `k`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.d)?;
        let mut g = Self::empty(self.d);
        for a in 0..self.d {
            for b in 0..self.d {
                g.adj[a * self.d + b] = self.has_edge(perm[a], perm[b]);
            }
        }
        Ok(g)
    }

    pub fn to_rows(&self) -> Vec<Vec<bool>> {
        (0..self.d)
            .map(|i| (0..self.d).map(|j| self.has_edge(i, j)).collect())
            .collect()
    }
}

pub(crate) fn check_permutation(perm: &[usize], d: usize) -> Result<()> {
    if perm.len() != d {
        return Err(Error::dim("permutation", d, perm.len()));
    }
    let mut seen = vec![false; d];
    for &p in perm {
        if p >= d || seen[p] {
            return Err(Error::Argument(format!("not a permutation of 0..{d}: {perm:?}")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Random DAG: draw a uniform node permutation, then include each forward
/// pair along it independently with probability `edge_prob`.
pub fn sample_dag(d: usize, edge_prob: f64, rng: &mut RngStream) -> Result<Dag> {
    if d < 2 {
        return Err(Error::Argument(format!("need at least 2 variables, got {d}")));
    }
    if !edge_prob.is_finite() {
        return Err(Error::Argument("edge probability must be finite".into()));
    }
    let p = edge_prob.clamp(0.0, 1.0);
    let perm = rng.permutation(d);
    let mut g = Dag::empty(d);
    for a in 0..d {
        for b in (a + 1)..d {
            if rng.bernoulli(p) {
                g.adj[perm[a] * d + perm[b]] = true;
            }
        }
    }
    Ok(g)
}

/// Default edge probability `min(1, 2/(d−1))`.
pub fn default_edge_prob(d: usize) -> f64 {
    if d < 2 {
        0.0
    } else {
        (2.0 / (d as f64 - 1.0)).min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent acyclicity oracle: repeatedly strip sinks.
    fn acyclic_by_sink_removal(g: &Dag) -> bool {
        let mut alive = vec![true; g.d()];
        for _ in 0..g.d() {
            let sink = (0..g.d()).find(|&v| alive[v] && (0..g.d()).all(|c| !alive[c] || !g.has_edge(v, c)));
            match sink {
                Some(v) => alive[v] = false,
                None => return false,
            }
        }
        true
    }

    #[test]
    fn two_nodes_with_prob_one_always_connected() {
        let mut rng = RngStream::new(0);
        for _ in 0..50 {
            let g = sample_dag(2, default_edge_prob(2), &mut rng).unwrap();
            assert_eq!(g.edge_count(), 1);
        }
        assert_eq!(default_edge_prob(3), 1.0);
        assert!((default_edge_prob(4) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_prob_is_empty() {
        let mut rng = RngStream::new(1);
        assert_eq!(sample_dag(6, 0.0, &mut rng).unwrap().edge_count(), 0);
        assert!(sample_dag(1, 0.5, &mut rng).is_err());
    }

    #[test]
    fn mean_edge_count_monte_carlo() {
        let mut rng = RngStream::new(2);
        let draws = 10_000;
        let counts: Vec<f64> = (0..draws)
            .map(|_| sample_dag(4, 2.0 / 3.0, &mut rng).unwrap().edge_count() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / draws as f64;
        // Binomial(6, 2/3): variance 6·(2/3)·(1/3) = 4/3
        let se = (4.0f64 / 3.0 / draws as f64).sqrt();
        assert!((mean - 4.0).abs() < 3.0 * se, "mean = {mean}");
    }

    #[test]
    fn rejects_cycles_and_self_loops() {
        assert!(Dag::from_adjacency(&[vec![false, true], vec![true, false]]).is_err());
        assert!(Dag::from_adjacency(&[vec![true]]).is_err());
        assert!(Dag::from_adjacency(&[vec![false, true], vec![false]]).is_err());
    }

    #[test]
    fn chain_structure() {
        let g = Dag::chain(4);
        assert_eq!(g.parents(2), vec![1]);
        assert_eq!(g.descendants(1), vec![2, 3]);
        assert_eq!(g.roots(), vec![0]);
        assert_eq!(g.topological_order().unwrap(), vec![0, 1, 2, 3]);
    }

    proptest! {
        #[test]
        fn sampled_dags_are_acyclic(seed in any::<u64>(), d in 2usize..12, p in 0.0f64..1.0) {
            let g = sample_dag(d, p, &mut RngStream::new(seed)).unwrap();
            prop_assert!(acyclic_by_sink_removal(&g));
            prop_assert!(g.topological_order().is_some());
            for i in 0..d {
                prop_assert!(!g.has_edge(i, i));
                for j in g.descendants(i) {
                    prop_assert!(!g.descendants(j).contains(&i));
                }
                for p in g.parents(i) {
                    prop_assert!(g.children(p).contains(&i));
                }
            }
        }
    }
}
