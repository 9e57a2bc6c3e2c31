use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sweep::MetricsReport;
use crate::error::{Result, SsmError};

/// JSON schema of [`MetricsReport`].
pub const REPORT_SCHEMA: &str = include_str!("../../../../docs/report.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

fn check_grid(report: &MetricsReport) -> Result<()> {
    let meta = &report.metadata;
    if report.cells.is_empty() {
        return Err(SsmError::InvalidParameter("report has no cells".into()));
    }
    if report.cells.len() != meta.d_hat.len() * meta.queries.len() {
        return Err(SsmError::InvalidParameter(format!(
            "{} cells for a {}x{} grid",
            report.cells.len(),
            meta.d_hat.len(),
            meta.queries.len()
        )));
    }
    for &d in &meta.d_hat {
        for &n in &meta.queries {
            let cell = report.cell(d, n).ok_or_else(|| {
                SsmError::InvalidParameter(format!("missing cell (d_hat={d}, n={n})"))
            })?;
            if !(0.0..=1.0).contains(&cell.recognition_rate) {
                return Err(SsmError::InvalidParameter(format!(
                    "rate {} out of range",
                    cell.recognition_rate
                )));
            }
        }
    }
    Ok(())
}

/// Renders the report. JSON is pretty-printed; CSV has a
/// `d_hat,n,metric,value` header and one row per cell and metric.
pub fn render_report(report: &MetricsReport, format: ReportFormat) -> Result<String> {
    check_grid(report)?;
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut s = String::from("d_hat,n,metric,value\n");
            let mut metrics: Vec<(&str, Box<dyn Fn(&super::sweep::CellMetrics) -> Option<f64>>)> = vec![
                ("recognition_rate", Box::new(|c| Some(c.recognition_rate))),
                ("mean_residual", Box::new(|c| Some(c.mean_residual))),
                ("mean_sci", Box::new(|c| Some(c.mean_sci))),
            ];
            if report.cells.iter().all(|c| c.mean_wall_time_ms.is_some()) {
                metrics.push(("mean_wall_time_ms", Box::new(|c| c.mean_wall_time_ms)));
            }
            for (name, get) in &metrics {
                for c in &report.cells {
                    if let Some(v) = get(c) {
                        s.push_str(&format!("{},{},{},{}\n", c.d_hat, c.n, name, v));
                    }
                }
            }
            Ok(s)
        }
    }
}

pub fn emit_report(report: &MetricsReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_report(report, format)?;
    fs::write(path, text).map_err(|e| SsmError::io(path, e))
}

/// Parses a JSON report strictly and checks grid coverage and rate bounds.
pub fn validate_report_json(text: &str) -> Result<MetricsReport> {
    let report: MetricsReport = serde_json::from_str(text)?;
    check_grid(&report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{ClassifierMode, LayoutMode};
    use crate::harness::sweep::{CellMetrics, ReportMetadata};
    use crate::projection::ProjectionKind;

    fn report(d: &[usize], n: &[usize]) -> MetricsReport {
        let cells = d
            .iter()
            .flat_map(|&d_hat| {
                n.iter().map(move |&n| CellMetrics {
                    d_hat,
                    n,
                    trials: 2,
                    correct: 1,
                    total: 2,
                    recognition_rate: 0.5,
                    mean_residual: 0.1,
                    mean_sci: 0.7,
                    mean_wall_time_ms: None,
                })
            })
            .collect();
        MetricsReport {
            metadata: ReportMetadata {
                master_seed: 1,
                projection_seed: 2,
                projection_kind: ProjectionKind::Gaussian,
                config_hash: "0".repeat(64),
                mode: ClassifierMode::NToOne,
                layout: LayoutMode::Class,
                d_hat: d.to_vec(),
                queries: n.to_vec(),
                trials: 2,
            },
            cells,
        }
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(render_report(&report(&[], &[]), ReportFormat::Json).is_err());
    }

    #[test]
    fn csv_rows_per_metric() {
        let csv = render_report(&report(&[16, 32], &[1, 4]), ReportFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "d_hat,n,metric,value");
        for metric in ["recognition_rate", "mean_residual", "mean_sci"] {
            assert_eq!(lines.iter().filter(|l| l.contains(metric)).count(), 4);
        }
        assert_eq!(lines.len(), 1 + 12);
    }

    #[test]
    fn json_round_trip() {
        let r = report(&[16], &[1, 2]);
        let text = render_report(&r, ReportFormat::Json).unwrap();
        assert_eq!(validate_report_json(&text).unwrap(), r);
    }

    #[test]
    fn incomplete_grid_rejected() {
        let mut r = report(&[16, 32], &[1]);
        r.cells.pop();
        assert!(render_report(&r, ReportFormat::Json).is_err());
    }
}
