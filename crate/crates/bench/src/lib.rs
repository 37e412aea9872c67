//! Experiment harness: configuration, parallel replicates, CSV/JSON
//! outputs, summary tables, the oracle suite and escort curves.

pub mod config;
pub mod error;
pub mod experiment;
pub mod fig1;
pub mod record;
pub mod summary;
pub mod table;
pub mod validate;

pub use config::{ExperimentConfig, Scenario};
pub use error::{BenchError, Result};
pub use experiment::{execute, run_experiment, RunOptions, RunOutput};
pub use record::RunRecord;
pub use summary::Summary;
