//! Final-iteration medians arranged by family, algorithm and target.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::PathBuf;

use lambda_family::student::is_compatible;

use crate::config::{nu_format, Scenario};
use crate::error::{BenchError, Result};
use crate::summary::Summary;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowKey {
    pub nu_family: f64,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnKey {
    pub nu_target: f64,
    pub d: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Median(f64),
    /// The target's escort lacks second moments under this family.
    Incompatible,
    /// Compatible but no completed run was found.
    Missing,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub rows: Vec<RowKey>,
    pub columns: Vec<ColumnKey>,
    /// `cells[row][column]`.
    pub cells: Vec<Vec<Cell>>,
}

fn row_order(a: &RowKey, b: &RowKey) -> Ordering {
    a.nu_family.total_cmp(&b.nu_family).then(a.scenario.cmp(&b.scenario))
}

fn column_order(a: &ColumnKey, b: &ColumnKey) -> Ordering {
    a.nu_target.total_cmp(&b.nu_target).then(b.d.cmp(&a.d)).then(a.kappa.total_cmp(&b.kappa))
}

impl Table {
    /// Rows and columns are the union of those present in `summaries`;
    /// every cell of that product is filled, `×` where incompatible.
    pub fn from_summaries(summaries: &[Summary]) -> Self {
        let mut rows: Vec<RowKey> = Vec::new();
        let mut columns: Vec<ColumnKey> = Vec::new();
        for s in summaries {
            let c = &s.config;
            let r = RowKey { nu_family: c.nu_family, scenario: c.scenario };
            let k = ColumnKey { nu_target: c.nu_target, d: c.d, kappa: c.kappa };
            if !rows.contains(&r) {
                rows.push(r);
            }
            if !columns.contains(&k) {
                columns.push(k);
            }
        }
        rows.sort_by(row_order);
        columns.sort_by(column_order);
        let cells = rows
            .iter()
            .map(|r| {
                columns
                    .iter()
                    .map(|k| {
                        if r.scenario.is_vi() && !is_compatible(k.nu_target, r.nu_family, k.d) {
                            return Cell::Incompatible;
                        }
                        summaries
                            .iter()
                            .rev()
                            .find(|s| {
                                let c = &s.config;
                                c.scenario == r.scenario
                                    && c.nu_family == r.nu_family
                                    && c.nu_target == k.nu_target
                                    && c.d == k.d
                                    && c.kappa == k.kappa
                            })
                            .and_then(|s| s.final_quartiles)
                            .map_or(Cell::Missing, |q| Cell::Median(q.median))
                    })
                    .collect()
            })
            .collect();
        Self { rows, columns, cells }
    }

    pub fn get(&self, row: RowKey, column: ColumnKey) -> Option<Cell> {
        let i = self.rows.iter().position(|r| *r == row)?;
        let j = self.columns.iter().position(|c| *c == column)?;
        Some(self.cells[i][j])
    }

    /// Markdown rendering; medians in 3 significant digits.
    pub fn render(&self) -> String {
        let mut s = String::from("| ν | algorithm |");
        for c in &self.columns {
            let _ = write!(s, " ν_π={} d={} κ={} |", nu_format::display(c.nu_target), c.d, c.kappa);
        }
        s.push_str("\n|---|---|");
        s.push_str(&"---|".repeat(self.columns.len()));
        s.push('\n');
        for (r, row) in self.rows.iter().zip(&self.cells) {
            let _ = write!(s, "| {} | {} |", nu_format::display(r.nu_family), r.scenario);
            for cell in row {
                match cell {
                    Cell::Median(v) => {
                        let _ = write!(s, " {v:.2e} |");
                    }
                    Cell::Incompatible => s.push_str(" × |"),
                    Cell::Missing => s.push_str(" - |"),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Reads every summary matched by `pattern`.
pub fn load_summaries(pattern: &str) -> Result<Vec<Summary>> {
    let paths: Vec<PathBuf> = glob::glob(pattern)?.filter_map(|p| p.ok()).filter(|p| p.is_file()).collect();
    if paths.is_empty() {
        return Err(BenchError::NoInputs(pattern.into()));
    }
    paths.iter().map(|p| Summary::read(p)).collect()
}

pub fn table(pattern: &str) -> Result<Table> {
    Ok(Table::from_summaries(&load_summaries(pattern)?))
}
