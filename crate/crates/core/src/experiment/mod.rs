//! Configuration, the round loop, multi-seed sweeps and CSV output.

pub mod config;
pub mod runner;
pub mod sweep;

pub use config::{ExperimentConfig, RunPolicy, TaskKind};
pub use runner::{
    run_experiment, run_many, run_stem, trace_waypoints, write_effective_config, write_metrics_csv,
    write_run_outputs, write_waypoints_csv, MetricsRecord, RunResult, TaskData, WaypointRecord,
};
pub use sweep::{aggregate_runs, compare_fl, sweep, write_sweep_csv, FlComparison, SweepRow};
