//! Order-quality metrics and cross-seed aggregation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::dag::{check_permutation, Dag};

/// A permutation of variables; `order[k]` is the variable placed at position `k`.
///
/// Indices are zero-based in memory and one-based in every file and CLI surface.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct CausalOrder(Vec<usize>);

impl CausalOrder {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        check_permutation(&order, order.len())?;
        Ok(Self(order))
    }

    pub fn identity(d: usize) -> Self {
        Self((0..d).collect())
    }

    pub fn from_one_based(order: &[usize]) -> Result<Self> {
        if order.contains(&0) {
            return Err(Error::Argument("variable indices are 1-based".into()));
        }
        Self::new(order.iter().map(|&v| v - 1).collect())
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|&v| v + 1).collect()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `positions()[v]` is the position of variable `v`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.0.len()];
        for (k, &v) in self.0.iter().enumerate() {
            pos[v] = k;
        }
        pos
    }
}

impl TryFrom<Vec<usize>> for CausalOrder {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CausalOrder> for Vec<usize> {
    fn from(o: CausalOrder) -> Self {
        o.0
    }
}

impl fmt::Display for CausalOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.to_one_based().iter().map(ToString::to_string).collect();
        f.write_str(&s.join(","))
    }
}

/// Number of edges `i → j` of `dag` with `i` placed after `j`.
pub fn count_backward(order: &CausalOrder, dag: &Dag) -> Result<usize> {
    if order.len() != dag.d() {
        return Err(Error::Argument(format!(
            "order covers {} variables, graph has {}",
            order.len(),
            dag.d()
        )));
    }
    let pos = order.positions();
    Ok(dag.edges().filter(|&(i, j)| pos[i] > pos[j]).count())
}

/// Whether `order` linearly extends the graph's partial order.
pub fn is_valid_order(order: &CausalOrder, dag: &Dag) -> Result<bool> {
    Ok(count_backward(order, dag)? == 0)
}

/// Mean and sample (ddof = 1) standard deviation of per-seed values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate(values: &[f64]) -> Result<RunStats> {
    if values.len() < 2 {
        return Err(Error::Argument(format!("need at least 2 values, got {}", values.len())));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(RunStats {
        values: values.to_vec(),
        mean,
        std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::RngStream;
    use crate::scm::dag::sample_dag;
    use proptest::prelude::*;

    #[test]
    fn chain_forward_and_reverse() {
        let g = Dag::chain(3);
        let fwd = CausalOrder::new(vec![0, 1, 2]).unwrap();
        let rev = CausalOrder::new(vec![2, 1, 0]).unwrap();
        assert_eq!(count_backward(&fwd, &g).unwrap(), 0);
        assert_eq!(count_backward(&rev, &g).unwrap(), 2);
        assert!(is_valid_order(&fwd, &g).unwrap());
        assert!(!is_valid_order(&rev, &g).unwrap());
        assert!(count_backward(&CausalOrder::identity(2), &g).is_err());
    }

    #[test]
    fn empty_graph_accepts_everything() {
        let g = Dag::empty(4);
        let mut rng = RngStream::new(0);
        for _ in 0..20 {
            let o = CausalOrder::new(rng.permutation(4)).unwrap();
            assert!(is_valid_order(&o, &g).unwrap());
        }
    }

    #[test]
    fn order_validation_and_display() {
        assert!(CausalOrder::new(vec![0, 0]).is_err());
        assert!(CausalOrder::from_one_based(&[0, 1]).is_err());
        let o = CausalOrder::from_one_based(&[2, 3, 1]).unwrap();
        assert_eq!(o.as_slice(), &[1, 2, 0]);
        assert_eq!(o.to_string(), "2,3,1");
        assert_eq!(o.positions(), vec![2, 0, 1]);
    }

    #[test]
    fn aggregate_closed_forms() {
        let s = aggregate(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!((s.mean, s.std), (0.0, 0.0));
        let s = aggregate(&[0.0, 1.0]).unwrap();
        assert_eq!(s.mean, 0.5);
        assert!((s.std - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(aggregate(&[1.0]).is_err());
        // eight zeros and two ones: 0.2 ± 0.42
        let mut v = vec![0.0; 8];
        v.extend([1.0, 1.0]);
        let s = aggregate(&v).unwrap();
        assert!((s.mean - 0.2).abs() < 1e-12 && (s.std - 0.42).abs() < 0.005);
    }

    proptest! {
        #[test]
        fn bounds_and_relabeling(seed in any::<u64>(), d in 2usize..9) {
            let mut rng = RngStream::new(seed);
            let g = sample_dag(d, 0.5, &mut rng).unwrap();
            let o = CausalOrder::new(rng.permutation(d)).unwrap();
            let cb = count_backward(&o, &g).unwrap();
            prop_assert!(cb <= g.edge_count());
            let topo = CausalOrder::new(g.topological_order().unwrap()).unwrap();
            prop_assert_eq!(count_backward(&topo, &g).unwrap(), 0);
            let rev = CausalOrder::new(topo.as_slice().iter().rev().copied().collect()).unwrap();
            prop_assert_eq!(count_backward(&rev, &g).unwrap(), g.edge_count());

            // new label k = old label perm[k]
            let perm = rng.permutation(d);
            let mut inv = vec![0; d];
            for (k, &p) in perm.iter().enumerate() { inv[p] = k; }
            let g2 = g.permuted(&perm).unwrap();
            let o2 = CausalOrder::new(o.as_slice().iter().map(|&v| inv[v]).collect()).unwrap();
            prop_assert_eq!(count_backward(&o2, &g2).unwrap(), cb);
        }
    }
}
