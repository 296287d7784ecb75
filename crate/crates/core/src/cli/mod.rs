//! Pipeline orchestration behind the `clusterens` binary: configuration, the
//! file-based stages, the run manifest and the ablation harnesses.

mod ablation;
mod config;
mod pipeline;
mod stages;

pub use ablation::{
    compare_with_gt_neighbors, run_ablation, summarize_heads, AblationKind, AblationTable,
    HeadSummary,
};
pub use config::{
    AblationConfig, EnsembleConfig, MetricsConfig, NeighborConfig, PathsConfig, PipelineConfig,
};
pub use pipeline::{
    run_pipeline, sha256_file, RunManifest, StageRecord, CONFIG_ECHO_FILE, MANIFEST_FILE,
};
pub use stages::{
    ensemble_stage, eval_files, head_file, neighbor_sets_for, predict_stage, read_features,
    read_heads, save_labeling, selftrain_stage, train_stage, StageOutcome, BANK_FILE,
    BEST_HEAD_FILE, CLASSIFIER_FILE, CONSENSUS_FILE, HEADS_DIR, NEIGHBORS_FILE, PREDICTIONS_FILE,
};

use crate::error::Error;

/// A failed command. Configuration problems are reported before any stage runs.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {source}")]
    Runtime {
        stage: &'static str,
        #[source]
        source: Error,
    },
}

impl CliError {
    /// 1 for configuration errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime { .. } => 2,
        }
    }
}
