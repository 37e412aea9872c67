//! Quartiles across replicates.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{io_err, Result};
use crate::record::RunRecord;

/// Nearest-rank quantile: the `⌈p·n⌉`-th smallest value, no interpolation.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let rank = (p * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub count: usize,
}

impl Quartiles {
    /// `None` for an empty sample. NaNs sort last.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self { q25: nearest_rank(&v, 0.25), median: nearest_rank(&v, 0.5), q75: nearest_rank(&v, 0.75), count: v.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationQuartiles {
    pub iteration: u32,
    #[serde(flatten)]
    pub quartiles: Quartiles,
}

/// A replicate that stopped early, with a machine-readable reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub replicate: u32,
    pub reason: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub completed_replicates: usize,
    pub aborts: Vec<Abort>,
    pub per_iteration: Vec<IterationQuartiles>,
    /// Quartiles of each completed replicate's last metric.
    #[serde(rename = "final")]
    pub final_quartiles: Option<Quartiles>,
}

impl Summary {
    pub fn build(config: &ExperimentConfig, records: &[RunRecord], aborts: Vec<Abort>) -> Self {
        let mut by_iter: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let mut last: BTreeMap<u32, (u32, f64)> = BTreeMap::new();
        for r in records {
            by_iter.entry(r.iteration).or_default().push(r.metric);
            let e = last.entry(r.replicate).or_insert((r.iteration, r.metric));
            if r.iteration >= e.0 {
                *e = (r.iteration, r.metric);
            }
        }
        let per_iteration = by_iter
            .into_iter()
            .filter_map(|(iteration, v)| Quartiles::of(&v).map(|quartiles| IterationQuartiles { iteration, quartiles }))
            .collect();
        let finals: Vec<f64> = last.values().map(|&(_, m)| m).collect();
        Self {
            config: config.clone(),
            completed_replicates: last.len(),
            aborts,
            per_iteration,
            final_quartiles: Quartiles::of(&finals),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quartiles_of_small_samples() {
        let q = Quartiles::of(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!((q.q25, q.median, q.q75), (2.0, 3.0, 4.0));
        let q = Quartiles::of(&[7.0]).unwrap();
        assert_eq!((q.q25, q.median, q.q75), (7.0, 7.0, 7.0));
        let q = Quartiles::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((q.q25, q.median, q.q75), (1.0, 2.0, 3.0));
        assert!(Quartiles::of(&[]).is_none());
    }

    proptest! {
        #[test]
        fn odd_median_is_middle_order_statistic(mut v in prop::collection::vec(-1e6f64..1e6, 1..40usize)) {
            if v.len() % 2 == 0 {
                v.pop();
            }
            let q = Quartiles::of(&v).unwrap();
            v.sort_by(f64::total_cmp);
            prop_assert_eq!(q.median, v[v.len() / 2]);
            prop_assert!(q.q25 <= q.median && q.median <= q.q75);
        }
    }
}
