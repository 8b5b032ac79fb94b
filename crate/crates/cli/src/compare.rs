//! Side-by-side comparison of run reports.

use std::fmt::Write as _;

use crate::artifacts::Report;
use crate::{CliError, Result};

/// A named quantity across reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub values: Vec<f64>,
}

impl Row {
    /// Percentage change of each value relative to the first; `None` when
    /// the reference is zero and the value is not.
    pub fn changes(&self) -> Vec<Option<f64>> {
        let base = self.values[0];
        self.values
            .iter()
            .map(|&v| {
                if v == base {
                    Some(0.0)
                } else if base == 0.0 {
                    None
                } else {
                    Some(100.0 * (v - base) / base.abs())
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub labels: Vec<String>,
    pub rows: Vec<Row>,
}

pub fn compare(reports: &[Report]) -> Result<Comparison> {
    let first = reports.first().ok_or_else(|| CliError::InvalidArgument("need at least two reports".into()))?;
    if reports.len() < 2 {
        return Err(CliError::InvalidArgument("need at least two reports".into()));
    }
    for r in &reports[1..] {
        if r.problem != first.problem || r.mesh != first.mesh {
            return Err(CliError::InvalidArgument(format!(
                "cannot compare {} {}x{} with {} {}x{}",
                first.problem, first.mesh[0], first.mesh[1], r.problem, r.mesh[0], r.mesh[1]
            )));
        }
        if r.timings.iter().map(|t| &t.name).ne(first.timings.iter().map(|t| &t.name)) {
            return Err(CliError::InvalidArgument("reports have different timing categories".into()));
        }
    }
    let row = |name: &str, f: &dyn Fn(&Report) -> f64| Row { name: name.to_string(), values: reports.iter().map(f).collect() };
    let mut rows = vec![
        row("F", &|r| r.final_objective.unwrap_or(f64::NAN)),
        row("Newton iterations", &|r| r.newton_iterations as f64),
        row("Factorization count", &|r| r.factorizations as f64),
    ];
    for (i, t) in first.timings.iter().enumerate() {
        rows.push(row(&t.name, &|r| r.timings[i].seconds));
    }
    Ok(Comparison { labels: reports.iter().map(|r| r.strategy.clone()).collect(), rows })
}

impl Comparison {
    /// Plain-text table: one column per report, each value followed by its
    /// change relative to the first report.
    pub fn render(&self) -> String {
        let mut cells: Vec<Vec<String>> = vec![std::iter::once(String::new()).chain(self.labels.iter().cloned()).collect()];
        for row in &self.rows {
            let mut line = vec![row.name.clone()];
            for (k, (v, c)) in row.values.iter().zip(row.changes()).enumerate() {
                let value = if v.fract() == 0.0 && v.abs() < 1e15 { format!("{v}") } else { format!("{v:.6e}") };
                line.push(match (k, c) {
                    (0, _) => value,
                    (_, Some(c)) => format!("{value} ({c:+.2}%)"),
                    (_, None) => format!("{value} (n/a)"),
                });
            }
            cells.push(line);
        }
        let widths: Vec<usize> = (0..cells[0].len()).map(|c| cells.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for line in &cells {
            let padded: Vec<String> = line.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        }
        out
    }
}
