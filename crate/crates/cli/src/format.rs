//! Report rendering. Tables show metrics in percent; JSON and CSV keep the
//! raw `[0, 1]` values.

use clap::ValueEnum;
use parabench_core::MetricReport;
use parabench_duotower::ExperimentReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

/// Value as shown in a table. RSUM is already a sum of percentages.
pub fn table_value(metric: &str, v: f64) -> f64 {
    if metric == "RSUM" {
        v
    } else {
        100.0 * v
    }
}

/// Left-aligned first column, right-aligned rest.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    out += &line(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

pub fn metrics_table(reports: &[MetricReport]) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| vec![r.label(), r.count.to_string(), format!("{:.2}", table_value(&r.metric, r.aggregate))])
        .collect();
    render_table(&["metric", "n", "value"], &rows)
}

pub fn metrics_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("metric,k,value,count\n");
    for r in reports {
        let k = r.k.map(|k| k.to_string()).unwrap_or_default();
        out += &format!("{},{},{},{}\n", r.metric, k, r.aggregate, r.count);
    }
    out
}

fn experiment_labels(report: &ExperimentReport) -> [String; 3] {
    let c = &report.config;
    [format!("AO@{}", c.k), format!("JS@{}", c.k), format!("R@{}", c.recall_k)]
}

/// One row per run, then one `mean` row per strategy.
pub fn experiment_table(report: &ExperimentReport) -> String {
    let [ao, js, r] = experiment_labels(report);
    let pct = |v: f64| format!("{:.2}", 100.0 * v);
    let mut rows: Vec<Vec<String>> = report
        .runs
        .iter()
        .map(|run| vec![run.strategy.to_string(), run.seed.to_string(), pct(run.ao), pct(run.js), pct(run.recall)])
        .collect();
    rows.extend(
        report.means.iter().map(|m| vec![m.strategy.to_string(), "mean".into(), pct(m.ao), pct(m.js), pct(m.recall)]),
    );
    render_table(&["strategy", "seed", &ao, &js, &r], &rows)
}

pub fn experiment_csv(report: &ExperimentReport) -> String {
    let [ao, js, r] = experiment_labels(report);
    let mut out = format!("strategy,seed,{ao},{js},{r},final_loss,trainable_params\n");
    for run in &report.runs {
        out += &format!(
            "{},{},{},{},{},{},{}\n",
            run.strategy, run.seed, run.ao, run.js, run.recall, run.final_loss, run.trainable_params
        );
    }
    for m in &report.means {
        out += &format!("{},mean,{},{},{},,\n", m.strategy, m.ao, m.js, m.recall);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_scale_to_percent() {
        let reports = [MetricReport::from_items("AO", Some(10), vec![0.5, 1.0]), MetricReport::from_items("RSUM", None, vec![512.5])];
        let t = metrics_table(&reports);
        assert!(t.contains("AO@10") && t.contains("75.00") && t.contains("512.50"), "{t}");
        assert!(metrics_csv(&reports).contains("AO,10,0.75,2"));
    }

    #[test]
    fn columns_align() {
        let t = render_table(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\n---  --\nxyz   1\n");
    }
}
