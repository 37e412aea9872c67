//! Per-iteration records and their CSV form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub replicate: u32,
    pub iteration: u32,
    /// Rényi divergence to the target (VI), held-out mean log-likelihood
    /// (online MLE) or data log-likelihood (EM).
    pub metric: f64,
    pub acceptance: Option<f64>,
    /// Wall time of the whole replicate in nanoseconds; 0 unless timing is on.
    pub wall_ns: u64,
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(crate::error::io_err(path))?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<RunRecord>, _>>()?)
}

/// Iterations strictly increase within each replicate.
pub fn iterations_increasing(records: &[RunRecord]) -> bool {
    records
        .windows(2)
        .all(|w| w[0].replicate != w[1].replicate || w[1].iteration > w[0].iteration)
}
