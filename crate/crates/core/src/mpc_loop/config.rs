use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LoopError;
use crate::evaluator::GripperCommand;
use crate::fusion::FusionParams;
use crate::geometry::Vec3;
use crate::sampler::SamplerParams;
use crate::views::Intrinsics;

fn default_max_steps() -> u32 {
    30
}

/// One entry of the goal list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubtaskGoal {
    pub goal_position: Vec3,
    #[serde(default)]
    pub target_object_id: Option<String>,
    /// Gripper state the subtask must end in.
    #[serde(default)]
    pub required_gripper: Option<GripperCommand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub task_description: String,
    pub subtasks: Vec<SubtaskGoal>,
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampler: SamplerParams,
    #[serde(default)]
    pub fusion: FusionParams,
    #[serde(default)]
    pub camera: Intrinsics,
}

impl TaskConfig {
    pub fn validate(&self) -> Result<(), LoopError> {
        if self.subtasks.is_empty() {
            return Err(LoopError::Config("task needs at least one subtask".into()));
        }
        if self.max_steps == 0 {
            return Err(LoopError::Config("max_steps must be >= 1".into()));
        }
        for (i, s) in self.subtasks.iter().enumerate() {
            if !s.goal_position.is_finite() {
                return Err(LoopError::Config(format!("subtask {i}: non-finite goal")));
            }
            if s.required_gripper == Some(GripperCommand::Hold) {
                return Err(LoopError::Config(format!(
                    "subtask {i}: required_gripper must be open or close"
                )));
            }
        }
        self.sampler
            .validate()
            .map_err(|e| LoopError::Config(e.to_string()))?;
        self.fusion
            .validate()
            .map_err(|e| LoopError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, LoopError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            LoopError::Config(format!(
                "task config at `{}` (line {}, column {}): {}",
                e.path(),
                e.inner().line(),
                e.inner().column(),
                e.inner()
            ))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LoopError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| LoopError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}
