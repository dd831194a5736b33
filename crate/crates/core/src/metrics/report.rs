use std::io::Write;

use serde::{Deserialize, Serialize};

/// Per-item metric values with their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<usize>,
    pub per_item: Vec<f64>,
    pub aggregate: f64,
    pub count: usize,
}

impl MetricReport {
    /// Aggregates with [`pairwise_sum`], so the mean does not depend on how
    /// the items were produced.
    pub fn from_items(metric: impl Into<String>, k: Option<usize>, per_item: Vec<f64>) -> Self {
        let count = per_item.len();
        let aggregate = if count == 0 { f64::NAN } else { pairwise_sum(&per_item) / count as f64 };
        Self { metric: metric.into(), k, per_item, aggregate, count }
    }

    /// Metric label such as `AO@10`.
    pub fn label(&self) -> String {
        match self.k {
            Some(k) => format!("{}@{}", self.metric, k),
            None => self.metric.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "item,{}", self.label())?;
        for (i, v) in self.per_item.iter().enumerate() {
            writeln!(out, "{i},{v}")?;
        }
        Ok(())
    }
}

/// Recursive pairwise summation with a fixed split point.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
