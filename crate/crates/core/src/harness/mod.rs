//! Experiment orchestration: JSON configs, runs over every scheme with
//! reference baselines, MSE series, CSV and SVG output, parameter sweeps.

pub mod config;
pub mod emit;
pub mod experiment;
pub mod metrics;
pub mod sweep;

pub use config::{AgentConfig, DataSource, EvalSplit, ExperimentConfig, LoadedConfig, SweepGrid};
pub use emit::{emit_csv, emit_plots, emit_svg, read_metrics_csv, write_metrics_csv, METRICS_FILE};
pub use experiment::{prepare_data, run_experiment, PreparedData, RunRecord, EVAL_SETS};
pub use metrics::{degradation_curve, metric_mse, monotone_tail, zero_mse, MetricSeries, TailAnnotation, TailDirection};
pub use sweep::{expand_sweep, point_dir_name, run_sweep, SweepPoint};
