//! Shared fixtures for the benchmarks.

use rootflow_core::flow::{ConditionalFlow, FlowSpec};
use rootflow_core::scm::{standardize, synthesize, SynthConfig};
use rootflow_core::{Dataset, Matrix, RngStream};

/// A conditional flow with every parameter perturbed away from identity.
pub fn random_flow(cond_dim: usize, spec: &FlowSpec, seed: u64) -> ConditionalFlow {
    let mut rng = RngStream::new(seed);
    let mut flow = ConditionalFlow::near_identity(cond_dim, spec, &mut rng.substream(0)).unwrap();
    for p in flow.params_mut() {
        *p += 0.1 * rng.normal();
    }
    flow
}

pub fn random_matrix(d: usize, seed: u64) -> Matrix {
    let mut rng = RngStream::new(seed);
    Matrix::from_fn(d, d, |_, _| rng.normal())
}

/// Standardized synthetic data.
pub fn synthetic(d: usize, n: usize, seed: u64) -> Dataset {
    let (_, ds) = synthesize(&SynthConfig::new(d, n, seed)).unwrap();
    standardize(&ds).unwrap()
}
