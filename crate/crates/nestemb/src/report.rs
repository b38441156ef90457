//! JSON and CSV renderings of training and correlation reports.

use nestemb_core::{CorrelationReport, SimilarityMetric, TrainReport};
use serde_json::{json, Map, Value};

/// Column order of the per-dimension CSV table.
pub fn csv_header() -> String {
    let mut cols = vec!["dimension".to_owned()];
    for metric in SimilarityMetric::ALL {
        cols.push(format!("pearson_{}", metric.name()));
        cols.push(format!("spearman_{}", metric.name()));
    }
    cols.push("pearson_max".into());
    cols.push("spearman_max".into());
    cols.join(",")
}

/// One line per dimension in ladder order. Missing metrics are left blank.
pub fn correlation_csv(report: &CorrelationReport) -> String {
    let mut out = csv_header();
    out.push('\n');
    for row in &report.rows {
        let mut cells = vec![row.dim.to_string()];
        for metric in SimilarityMetric::ALL {
            match row.get(metric) {
                Some(c) => {
                    cells.push(c.pearson.to_string());
                    cells.push(c.spearman.to_string());
                }
                None => cells.extend([String::new(), String::new()]),
            }
        }
        cells.push(row.pearson_max.to_string());
        cells.push(row.spearman_max.to_string());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// `{"dimensions": {"256": {"cosine": {...}, ..., "max": {...}}}, "config": ...}`.
pub fn correlation_json(report: &CorrelationReport, config: Value) -> Value {
    let mut dims = Map::new();
    for row in &report.rows {
        let mut cell = Map::new();
        for (metric, c) in &row.metrics {
            cell.insert(
                metric.name().to_owned(),
                json!({ "pearson": c.pearson, "spearman": c.spearman }),
            );
        }
        cell.insert(
            "max".into(),
            json!({ "pearson": row.pearson_max, "spearman": row.spearman_max }),
        );
        dims.insert(row.dim.to_string(), Value::Object(cell));
    }
    json!({ "dimensions": dims, "config": config })
}

pub fn train_json(report: &TrainReport, config: Value) -> Value {
    let accuracy: Vec<Value> = report
        .final_accuracy
        .iter()
        .map(|(dim, acc)| json!({ "dim": dim, "accuracy": acc }))
        .collect();
    json!({
        "batch_losses": report.batch_losses,
        "epoch_mean_losses": report.epoch_mean_losses,
        "final_accuracy": accuracy,
        "duration_ms": report.duration_ms,
        "config": config,
    })
}
