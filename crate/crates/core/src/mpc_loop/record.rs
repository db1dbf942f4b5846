use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::TaskConfig;
use crate::evaluator::{AgentResponse, GripperCommand, ScoreTensor, Signals, SubQuestionKey};
use crate::fusion::ViewStats;
use crate::geometry::Vec3;
use crate::scene::ExecutionOutcome;

pub const MEMORY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub id: u32,
    pub end: Vec3,
}

/// Raw answer of one agent for one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseLog {
    pub agent_id: String,
    pub camera_id: String,
    pub responsive: bool,
    pub note: Option<String>,
    pub raw_text: String,
}

impl From<&AgentResponse> for ResponseLog {
    fn from(r: &AgentResponse) -> Self {
        Self {
            agent_id: r.agent_id.clone(),
            camera_id: r.camera_id.clone(),
            responsive: r.responsive,
            note: r.note.clone(),
            raw_text: r.raw_text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub subtask_index: usize,
    pub radius: f64,
    pub theta_deg: f64,
    pub sampling_attempts: u32,
    pub candidates: Vec<CandidateSummary>,
    pub feasible_ids: Vec<u32>,
    pub template_version: u32,
    pub active_views: Vec<String>,
    pub responses: Vec<ResponseLog>,
    pub tensor: Option<ScoreTensor>,
    pub view_stats: Vec<ViewStats>,
    pub scores: BTreeMap<u32, f64>,
    pub chosen_id: Option<u32>,
    pub signals: Option<Signals>,
    pub gripper_event: Option<GripperCommand>,
    pub subtask_advanced: bool,
    pub spurious_completion: bool,
    pub outcome: Option<ExecutionOutcome>,
    pub evaluation_error: Option<String>,
}

impl StepRecord {
    /// Mean score of the chosen trajectory on `key` over responsive cells.
    pub fn chosen_mean(&self, key: SubQuestionKey) -> Option<f64> {
        let id = self.chosen_id?;
        let vals: Vec<f64> = self
            .tensor
            .as_ref()?
            .all_cells()
            .filter_map(|c| c.scores.get(&id))
            .map(|s| f64::from(s.get(key)))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    MaxSteps,
    FeasibleSetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub schema_version: u32,
    pub config: TaskConfig,
    pub template_version: u32,
    pub steps: Vec<StepRecord>,
    pub success: bool,
    pub failure_reason: Option<FailureReason>,
    pub spurious_completions: u32,
    pub gripper_closes: u32,
    pub gripper_opens: u32,
    pub collisions: u32,
}
