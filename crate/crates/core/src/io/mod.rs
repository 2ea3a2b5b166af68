//! File formats and the experiment runner.

pub mod experiment;
pub mod files;

pub use experiment::{
    default_output_dir, run_experiment, shuffle_columns, ExperimentConfig, Method, ResultRecord, RoundRecord,
    SeedRecord, OUTPUT_DIR_ENV,
};
pub use files::{
    format_dataset_csv, format_graph_csv, load_dataset_csv, load_graph_csv, load_order, parse_dataset_csv,
    parse_graph_csv, parse_order, save_dataset_csv, save_graph_csv, save_order,
};
