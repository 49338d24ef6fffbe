//! Experiment orchestration: splitting, standardization, training with early
//! stopping, metrics, rank aggregation and parameter sweeps.

mod commands;
mod config;
mod experiment;
mod metrics;
mod split;
mod train;

pub use commands::{
    adjacency_to_csv, analyze_to_dir, benchmark_to_dir, bound_to_dir, default_names, sweep_to_dir,
    train_to_dir, write_synth, Truth,
};
pub use config::{
    ExperimentConfig, MetricScale, ModelKind, Subsample, SynthConfig, ValidationMode,
};
pub use experiment::{
    candidates, run_experiment, sweep, sweep_to_csv, synth_datasets, write_artifacts, CellResult,
    ExperimentData, ExperimentResult, SweepParam, SweepPoint,
};
pub use metrics::{
    auroc, average_rank, mse, rank_scores, ranks_to_csv, MetricKind, MetricRow, MetricsTable,
    RankSummary,
};
pub use split::{complement, holdout_split, kfold_split, standardize, Standardizer};
pub use train::{
    history_to_csv, predict, train_model, validation_loss, EpochRecord, TrainConfig, Trained,
};
