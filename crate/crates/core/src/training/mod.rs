//! Training loop, evaluation, run directories and multi-seed experiments.

mod batch;
mod config;
mod eval;
mod experiments;
mod run_dir;
mod train;

pub use batch::{batch_loss, Batch, BatchLoss, SparsitySample};
pub use config::{TrainConfig, DEFAULT_SEEDS};
pub use eval::{evaluate, predict_dataset, EvalRecord};
pub use experiments::{
    ablate, default_ablation_grid, mean_shortcut_share, robustness, run_parallel, train_and_evaluate,
    AblationEffect, AblationRow, AblationTable, AblationVariant, MeanSd, RobustnessOptions, RobustnessReport,
    RobustnessSeed, RunSummary,
};
pub use run_dir::{log_csv, representation_csv, write_run_dir, LOG_HEADER};
pub use train::{build_model, channel_stats, evaluate_loss, train, EpochRecord, Split, Timings, TrainOutcome};
