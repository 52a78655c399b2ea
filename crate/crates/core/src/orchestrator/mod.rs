//! Round engine: client selection, local training dispatch, aggregation,
//! evaluation on the shared test set, reference baselines and metric export.

mod baseline;
mod config;
mod engine;
mod export;
mod workload;

pub use baseline::{
    run_baseline, run_centralized_baseline, run_no_federation_baseline, BaselineKind, BaselineSeries,
};
pub use config::{
    ExperimentConfig, OutputConfig, PartitionSection, Seeds, TransportConfig, TransportKind, DEFAULT_SITE_CAP,
};
pub use engine::{
    initial_params, run_experiment, run_over, select_participants, training_seed, ClientMetrics, RoundRecord,
    RunOutcome, Simulation, TransportStats,
};
pub use export::{
    export_metrics, read_metrics_csv, MetricsAppender, MetricsRow, RunKind, RunMeta, RunSummary, SummaryExtras,
    CSV_HEADER,
};
pub use workload::{
    build_workload, load_workload, prepare_split, read_prepared, write_prepared, PreparedSplit, Workload,
    PARTITION_FILE, SUMMARY_FILE, TEST_FILE, TRAIN_FILE,
};
