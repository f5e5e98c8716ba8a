//! Summary tables from a run directory: strategies as rows, point budgets as
//! columns.

use pinn_pricing::sampling::PointCounts;
use pinn_pricing::training::Strategy;

use crate::run::{budget_label, CellMetrics, Metrics, Status, Summary};

fn entry(cell: Option<&CellMetrics>, pick: fn(&CellMetrics) -> Option<&Summary>) -> String {
    let Some(c) = cell else { return "-".into() };
    if c.status == Status::Failed && pick(c).is_none() {
        return "failed".into();
    }
    let mut s = match pick(c) {
        Some(v) if v.n > 1 => format!("{:.2e} ± {:.1e}", v.mean, v.std),
        Some(v) => format!("{:.2e}", v.mean),
        None => "n/a".into(),
    };
    if c.status == Status::Failed {
        s.push_str(" (partial)");
    }
    s
}

fn table(metrics: &Metrics, title: &str, pick: fn(&CellMetrics) -> Option<&Summary>) -> String {
    let mut strategies: Vec<Strategy> = Vec::new();
    let mut budgets: Vec<PointCounts> = Vec::new();
    for c in &metrics.cells {
        if !strategies.contains(&c.strategy) {
            strategies.push(c.strategy);
        }
        if !budgets.contains(&c.budget) {
            budgets.push(c.budget);
        }
    }
    strategies.sort_by_key(|s| Strategy::ALL.iter().position(|a| a == s));

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["strategy".to_string()];
    header.extend(budgets.iter().map(budget_label));
    rows.push(header);
    for s in &strategies {
        let mut row = vec![s.label().to_string()];
        for b in &budgets {
            let cell = metrics.cells.iter().find(|c| c.strategy == *s && c.budget == *b);
            row.push(entry(cell, pick));
        }
        rows.push(row);
    }
    let widths: Vec<usize> =
        (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0)).collect();
    let mut out = format!("{title}\n");
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    out
}

/// Renders the summary. Columns are labelled `fixed+movable` interior points.
pub fn render(metrics: &Metrics) -> String {
    if metrics.cells.is_empty() {
        return format!("{} ({}): no cells\n", metrics.name, metrics.model);
    }
    let mut out = format!("{} ({})\n\n", metrics.name, metrics.model);
    if metrics.cells.iter().any(|c| c.relative_l2.is_some()) {
        out.push_str(&table(metrics, "Relative L2 error", |c| c.relative_l2.as_ref()));
        out.push('\n');
    }
    out.push_str(&table(metrics, "Residual MSE", |c| c.residual_mse.as_ref()));
    let failed: Vec<String> = metrics
        .cells
        .iter()
        .flat_map(|c| c.reps.iter().map(move |r| (c, r)))
        .filter(|(_, r)| r.status == Status::Failed)
        .map(|(c, r)| {
            format!("  {} {} rep {}: {}", c.strategy, budget_label(&c.budget), r.rep, r.error.as_deref().unwrap_or(""))
        })
        .collect();
    if !failed.is_empty() {
        out.push_str("\nFailed repetitions:\n");
        out.push_str(&failed.join("\n"));
        out.push('\n');
    }
    out
}
