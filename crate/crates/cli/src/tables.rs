//! Result serialization: per-repetition CSV plus paper-style summary tables.

use std::fs;
use std::path::Path;

use handoff_core::eval::Summary;

use crate::Result;

#[derive(Debug, Clone)]
pub struct ResultRow {
    pub sweep: String,
    pub system: String,
    pub repetition: usize,
    pub seed: u64,
    pub total_reward: f64,
    pub raw_reward: f64,
    pub cost_paid: f64,
    pub human_count: u64,
    pub algorithm_count: u64,
    pub expert_counts: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub sweep: String,
    pub system: String,
    /// Cost-adjusted total reward.
    pub total: Summary,
    /// Reward before costs.
    pub raw: Summary,
}

pub fn write_results_csv(rows: &[ResultRow], pool_size: usize, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("sweep,system,repetition,seed,total_reward,raw_reward,cost_paid,human_count,algorithm_count");
    for j in 0..pool_size {
        out.push_str(&format!(",expert_{j}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}",
            row.sweep,
            row.system,
            row.repetition,
            row.seed,
            row.total_reward,
            row.raw_reward,
            row.cost_paid,
            row.human_count,
            row.algorithm_count
        ));
        for j in 0..pool_size {
            out.push_str(&format!(",{}", row.expert_counts.get(j).copied().unwrap_or(0)));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write the summary CSV and a plain-text table; returns the table text.
pub fn write_summary(rows: &[SummaryRow], csv_path: &Path, txt_path: &Path) -> Result<String> {
    let mut csv = String::from("sweep,system,mean_total,stderr_total,mean_raw,stderr_raw,repetitions\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.sweep,
            row.system,
            row.total.mean,
            row.total.stderr,
            row.raw.mean,
            row.raw.stderr,
            row.total.repetitions
        ));
    }
    fs::write(csv_path, csv)?;

    let table = render_table(rows);
    fs::write(txt_path, &table)?;
    Ok(table)
}

/// Paper-style grid: one line per sweep entry, one `mean±stderr` column per
/// system (cost-adjusted totals).
pub fn render_table(rows: &[SummaryRow]) -> String {
    let mut sweeps: Vec<String> = Vec::new();
    let mut systems: Vec<String> = Vec::new();
    for row in rows {
        if !sweeps.contains(&row.sweep) {
            sweeps.push(row.sweep.clone());
        }
        if !systems.contains(&row.system) {
            systems.push(row.system.clone());
        }
    }
    let cell = |sweep: &str, system: &str| -> String {
        rows.iter()
            .find(|r| r.sweep == sweep && r.system == system)
            .map(|r| r.total.display_row())
            .unwrap_or_else(|| "-".to_string())
    };

    let mut widths: Vec<usize> = systems.iter().map(|s| s.len()).collect();
    for (j, system) in systems.iter().enumerate() {
        for sweep in &sweeps {
            widths[j] = widths[j].max(cell(sweep, system).len());
        }
    }
    let label_width = sweeps
        .iter()
        .map(|s| s.len())
        .max()
        .unwrap_or(1)
        .max("sweep".len());

    let mut out = String::new();
    out.push_str(&format!("{:label_width$}", "sweep"));
    for (j, system) in systems.iter().enumerate() {
        out.push_str(&format!("  {:>width$}", system, width = widths[j]));
    }
    out.push('\n');
    for sweep in &sweeps {
        out.push_str(&format!("{sweep:label_width$}"));
        for (j, system) in systems.iter().enumerate() {
            out.push_str(&format!("  {:>width$}", cell(sweep, system), width = widths[j]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_cells_use_paper_formatting() {
        let summary = Summary {
            mean: 423.3,
            stderr: 5.2,
            repetitions: 10,
        };
        assert_eq!(summary.display_row(), "423.3±5.2");
    }

    #[test]
    fn table_renders_one_line_per_sweep() {
        let row = |sweep: &str, system: &str, mean: f64| SummaryRow {
            sweep: sweep.into(),
            system: system.into(),
            total: Summary { mean, stderr: 1.0, repetitions: 3 },
            raw: Summary { mean, stderr: 1.0, repetitions: 3 },
        };
        let rows = vec![
            row("cost=0", "AO", 100.0),
            row("cost=0", "JC", 110.0),
            row("cost=0.5", "AO", 100.0),
            row("cost=0.5", "JC", 99.0),
        ];
        let table = render_table(&rows);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("AO") && lines[0].contains("JC"));
        assert!(lines[1].starts_with("cost=0"));
        assert!(lines[2].contains("99.0±1.0"));
    }
}
