//! Experiment harness: data ingestion, sweep configuration, metrics and
//! report emission.

mod config;
mod io;
mod report;
mod sweep;

pub use config::{DataSource, ExperimentConfig, ProjectionGrid, SyntheticSource};
pub use io::{
    load_image_dir, load_matrix_csv, load_pgm, parse_matrix_csv, parse_pgm, write_instance,
    write_matrix_csv, GroundTruth,
};
pub use report::{emit_report, render_report, validate_report_json, ReportFormat, REPORT_SCHEMA};
pub use sweep::{
    run_sweep, run_sweep_with, CellMetrics, MetricsReport, NoObserver, ReportMetadata, SweepObserver,
    SweepOutcome, TrialContext, TrialOutcome,
};
