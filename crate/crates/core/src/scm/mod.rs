//! Random DAGs, monotonic SCM sampling, datasets and standardization.

pub mod dag;
pub mod dataset;
pub mod synth;

pub use dag::{default_edge_prob, sample_dag, Dag};
pub use dataset::{default_column_names, standardize, varsort_order, Dataset};
pub use synth::{generate, sample_scm, synthesize, SynthConfig, SyntheticScm};
