//! Structured evaluation prompts, evaluator agents and score collection.

mod ensemble;
mod oracle;
mod remote;
mod response;
mod template;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::scene::Scene;
use crate::trajectory::FeasibleSet;
use crate::views::{Camera, ViewDescriptor, ViewImage};

pub use ensemble::{
    evaluate_ensemble, CellScores, EnsembleResult, ScoreTensor, ViewInput, DEFAULT_PARALLELISM,
};
pub use oracle::{oracle_agent, OracleAgent, TASK_COMPLETE_DISTANCE};
pub use remote::{build_agents, AgentConfig, AgentKind, AgentsConfig, RemoteAgent};
pub use response::{parse_response, render_answer, ANSWER_SCHEMA};
pub use template::{
    default_template, instantiate_prompt, load_template, parse_template, save_template,
    template_file_names, EvalTemplate, SubQuestion, PLACEHOLDERS,
};

#[derive(Debug, Error)]
pub enum EvaluatorError {
    #[error("template error: {0}")]
    Template(String),
    #[error("unbound placeholder `{{{{{0}}}}}`")]
    UnboundPlaceholder(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("agent configuration: {0}")]
    Config(String),
    #[error("no agent produced a usable answer for any view")]
    EvaluationUnavailable,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Failure of a single agent call.
#[derive(Debug, Error)]
pub enum AgentError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("malformed reply: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubQuestionKey {
    Safety,
    TaskAlign,
    Efficiency,
    Physical,
}

impl SubQuestionKey {
    pub const ALL: [SubQuestionKey; 4] = [
        Self::Safety,
        Self::TaskAlign,
        Self::Efficiency,
        Self::Physical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Safety => "safety",
            Self::TaskAlign => "task_align",
            Self::Efficiency => "efficiency",
            Self::Physical => "physical",
        }
    }

    /// Field name used inside the answer block.
    pub fn answer_label(self) -> &'static str {
        match self {
            Self::Safety => "safety",
            Self::TaskAlign => "task",
            Self::Efficiency => "eff",
            Self::Physical => "phys",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SubQuestionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sub-question weights; non-negative and summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub safety: f64,
    pub task_align: f64,
    pub efficiency: f64,
    pub physical: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            safety: 0.25,
            task_align: 0.35,
            efficiency: 0.20,
            physical: 0.20,
        }
    }
}

impl Weights {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            safety: a[0],
            task_align: a[1],
            efficiency: a[2],
            physical: a[3],
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.safety, self.task_align, self.efficiency, self.physical]
    }

    pub fn get(&self, k: SubQuestionKey) -> f64 {
        self.as_array()[k.index()]
    }

    pub fn sum(&self) -> f64 {
        self.as_array().iter().sum()
    }

    pub fn validate(&self) -> Result<(), EvaluatorError> {
        let a = self.as_array();
        if a.iter().any(|w| !w.is_finite() || *w < 0.0)
            || (self.sum() - 1.0).abs() > Self::SUM_TOLERANCE
        {
            return Err(EvaluatorError::Template(format!(
                "weights {a:?} must be >= 0 and sum to 1"
            )));
        }
        Ok(())
    }

    /// `Σ_k w_k·s_k`.
    pub fn weighted(&self, s: &SubScores) -> f64 {
        self.as_array()
            .iter()
            .zip(s.as_array())
            .map(|(w, v)| w * f64::from(v))
            .sum()
    }
}

/// Integer 0–10 answers to the four weighted sub-questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubScores {
    pub safety: u8,
    pub task_align: u8,
    pub efficiency: u8,
    pub physical: u8,
}

impl SubScores {
    pub const MAX: u8 = 10;

    pub fn from_array(a: [u8; 4]) -> Self {
        Self {
            safety: a[0],
            task_align: a[1],
            efficiency: a[2],
            physical: a[3],
        }
    }

    pub fn as_array(&self) -> [u8; 4] {
        [self.safety, self.task_align, self.efficiency, self.physical]
    }

    pub fn get(&self, k: SubQuestionKey) -> u8 {
        self.as_array()[k.index()]
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum GripperCommand {
    Open,
    Close,
    #[default]
    Hold,
}

impl GripperCommand {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Open => "open",
            Self::Close => "close",
            Self::Hold => "hold",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "open" => Some(Self::Open),
            "close" => Some(Self::Close),
            "hold" => Some(Self::Hold),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Signals {
    pub subtask_transition: bool,
    pub gripper: GripperCommand,
    pub task_complete: bool,
}

/// One agent's parsed answer for one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub agent_id: String,
    pub camera_id: String,
    pub scores: std::collections::BTreeMap<u32, SubScores>,
    pub q_view: u8,
    pub signals: Signals,
    pub raw_text: String,
    pub responsive: bool,
    /// Why the response was rejected, when it was.
    pub note: Option<String>,
}

impl AgentResponse {
    pub fn non_responsive(
        agent_id: &str,
        camera_id: &str,
        raw_text: String,
        note: impl Into<String>,
    ) -> Self {
        Self {
            agent_id: agent_id.to_string(),
            camera_id: camera_id.to_string(),
            scores: Default::default(),
            q_view: 0,
            signals: Signals::default(),
            raw_text,
            responsive: false,
            note: Some(note.into()),
        }
    }
}

/// Step-level facts shared by every evaluation call.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub scene: &'a Scene,
    pub feasible: &'a FeasibleSet,
    pub goal: Vec3,
    pub target_id: Option<&'a str>,
    pub epsilon: f64,
    pub weights: Weights,
    /// Gripper state the current subtask must end in.
    pub required_gripper: Option<GripperCommand>,
    pub is_last_subtask: bool,
}

/// Everything an agent sees for one view.
#[derive(Debug, Clone, Copy)]
pub struct EvalRequest<'a> {
    pub prompt: &'a str,
    pub camera: &'a Camera,
    pub image: &'a ViewImage,
    pub descriptor: &'a ViewDescriptor,
    pub context: &'a EvalContext<'a>,
}

/// An evaluator that answers a prompt about one view with raw text.
pub trait Agent: Send + Sync {
    fn id(&self) -> &str;
    fn respond(&self, request: &EvalRequest<'_>) -> Result<String, AgentError>;
}
