//! Experiment plumbing: CSV ingestion, train/test standardization, replicated
//! sweeps and TSV output.

pub mod config;
pub mod ingest;
pub mod preprocess;
pub mod sweep;
pub mod tables;

pub use config::{ExperimentConfig, Method, Mode};
pub use ingest::{ingest_csv, Dataset, IngestOptions};
pub use preprocess::{preprocess_train_test, Preprocessed, Transform};
pub use sweep::{run_sweep, ResultRow};
pub use tables::emit_tables;
