//! The receding-horizon task loop, its records and template refinement.

mod config;
mod memory;
mod record;
mod refine;
mod run;
mod trace;

use thiserror::Error;

pub use config::{SubtaskGoal, TaskConfig};
pub use memory::{ExperienceMemory, MemoryContents, SkippedLine};
pub use record::{
    CandidateSummary, FailureReason, ResponseLog, StepRecord, TaskRecord, MEMORY_SCHEMA_VERSION,
};
pub use refine::{
    analyze, apply_update, refine, shift_weights, KeyDiscrepancy, MetaAnalyst, RefinementReport,
    BIAS_SCORE_THRESHOLD, MIN_FAILURE_STEPS, WEIGHT_FLOOR, WEIGHT_STEP,
};
pub use run::{run_task, RunOptions, MAX_SAMPLING_ATTEMPTS};
pub use trace::{
    replay_trace, DecisionLog, ReplayMismatch, ReplayReport, TraceWriter, REPLAY_SCORE_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
    #[error(transparent)]
    Sampler(#[from] crate::sampler::SamplerError),
    #[error(transparent)]
    Views(#[from] crate::views::ViewsError),
    #[error(transparent)]
    Evaluator(#[from] crate::evaluator::EvaluatorError),
    #[error(transparent)]
    Fusion(#[from] crate::fusion::FusionError),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}
