// SPDX-License-Identifier: MIT OR Apache-2.0

//! Labelled rate tables rendered as CSV or Markdown.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::conflict::{SweepRow, Verdict};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub row_header: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

/// Integers print bare; anything else with up to four decimals.
fn fmt_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl RateTable {
    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if r.values.len() != self.columns.len() {
                return Err(Error::Input(format!(
                    "row `{}` has {} values for {} columns",
                    r.label,
                    r.values.len(),
                    self.columns.len()
                )));
            }
        }
        Ok(())
    }

    pub fn row(&self, label: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Cell value by row label and column name.
    pub fn cell(&self, label: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.row(label).map(|r| r.values[c])
    }

    pub fn to_csv(&self) -> Result<String> {
        self.validate()?;
        let mut s = std::iter::once(self.row_header.as_str())
            .chain(self.columns.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(",");
        s.push('\n');
        for r in &self.rows {
            let vals: Vec<String> = r.values.iter().map(|v| fmt_value(*v)).collect();
            let _ = writeln!(s, "{},{}", r.label, vals.join(","));
        }
        Ok(s)
    }

    pub fn to_markdown(&self) -> Result<String> {
        self.validate()?;
        let mut s = format!("| {} | {} |\n", self.row_header, self.columns.join(" | "));
        let _ = writeln!(s, "|---|{}", "---|".repeat(self.columns.len()));
        for r in &self.rows {
            let vals: Vec<String> = r.values.iter().map(|v| fmt_value(*v)).collect();
            let _ = writeln!(s, "| {} | {} |", r.label, vals.join(" | "));
        }
        Ok(s)
    }

    /// Percent of probes given `verdict`, one column per domain seen in any
    /// successful row. Failed rows are omitted.
    pub fn from_sweep(rows: &[SweepRow], verdict: Verdict) -> Self {
        let mut domains = std::collections::BTreeSet::new();
        for r in rows.iter().filter_map(|r| r.result.as_ref()) {
            domains.extend(r.by_domain.keys().copied());
        }
        let table_rows = rows
            .iter()
            .filter_map(|r| {
                let res = r.result.as_ref()?;
                let values = domains
                    .iter()
                    .map(|d| {
                        res.by_domain
                            .get(d)
                            .map_or(0.0, |c| 100.0 * c.rates().get(verdict))
                    })
                    .collect();
                Some(TableRow {
                    label: r.label.clone(),
                    values,
                })
            })
            .collect();
        RateTable {
            row_header: "label".into(),
            columns: domains.iter().map(|d| d.to_string()).collect(),
            rows: table_rows,
        }
    }
}
