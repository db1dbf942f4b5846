use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::response::parse_response;
use super::{Agent, AgentResponse, EvalContext, EvalRequest, EvaluatorError, Signals, SubScores};
use crate::views::{Camera, ViewDescriptor, ViewImage};

pub const DEFAULT_PARALLELISM: usize = 6;

/// One responsive (agent, view) answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScores {
    pub scores: BTreeMap<u32, SubScores>,
    pub q_view: u8,
    pub signals: Signals,
}

/// Scores indexed `[agent][view]`; `None` marks a non-responsive cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTensor {
    pub agent_ids: Vec<String>,
    pub view_ids: Vec<String>,
    pub trajectory_ids: Vec<u32>,
    pub cells: Vec<Vec<Option<CellScores>>>,
}

impl ScoreTensor {
    pub fn new(agent_ids: Vec<String>, view_ids: Vec<String>, trajectory_ids: Vec<u32>) -> Self {
        let cells = vec![vec![None; view_ids.len()]; agent_ids.len()];
        Self {
            agent_ids,
            view_ids,
            trajectory_ids,
            cells,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (
            self.agent_ids.len(),
            self.view_ids.len(),
            self.trajectory_ids.len(),
            4,
        )
    }

    pub fn cell(&self, m: usize, v: usize) -> Option<&CellScores> {
        self.cells.get(m)?.get(v)?.as_ref()
    }

    pub fn is_responsive(&self, m: usize, v: usize) -> bool {
        self.cell(m, v).is_some()
    }

    /// M′ for view `v`.
    pub fn responsive_count(&self, v: usize) -> usize {
        (0..self.agent_ids.len())
            .filter(|&m| self.is_responsive(m, v))
            .count()
    }

    pub fn view_index(&self, id: &str) -> Option<usize> {
        self.view_ids.iter().position(|v| v == id)
    }

    /// Responsive cells of view `v`.
    pub fn view_cells(&self, v: usize) -> impl Iterator<Item = &CellScores> {
        (0..self.agent_ids.len()).filter_map(move |m| self.cell(m, v))
    }

    pub fn all_cells(&self) -> impl Iterator<Item = &CellScores> {
        self.cells.iter().flatten().flatten()
    }

    pub fn set(&mut self, m: usize, v: usize, r: &AgentResponse) {
        self.cells[m][v] = r.responsive.then(|| CellScores {
            scores: r.scores.clone(),
            q_view: r.q_view,
            signals: r.signals,
        });
    }
}

/// A view ready for evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ViewInput<'a> {
    pub camera: &'a Camera,
    pub image: &'a ViewImage,
    pub descriptor: &'a ViewDescriptor,
    pub prompt: &'a str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub tensor: ScoreTensor,
    /// Parsed answers, agent-major: `responses[m * views + v]`.
    pub responses: Vec<AgentResponse>,
}

/// Asks every agent about every view, at most `parallelism` calls at a time.
///
/// Failed or malformed answers become non-responsive cells. Only when no
/// cell at all is usable does this return an error.
pub fn evaluate_ensemble(
    agents: &[Arc<dyn Agent>],
    views: &[ViewInput<'_>],
    ctx: &EvalContext<'_>,
    parallelism: usize,
) -> Result<EnsembleResult, EvaluatorError> {
    if agents.is_empty() || views.is_empty() {
        return Err(EvaluatorError::InvalidArgument(
            "need at least one agent and one view".into(),
        ));
    }
    let ids = ctx.feasible.ids();
    let jobs = agents.len() * views.len();
    let slots: Mutex<Vec<Option<AgentResponse>>> = Mutex::new(vec![None; jobs]);
    let next = AtomicUsize::new(0);
    let workers = parallelism.clamp(1, jobs);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let job = next.fetch_add(1, Ordering::Relaxed);
                if job >= jobs {
                    break;
                }
                let (agent, view) = (&agents[job / views.len()], &views[job % views.len()]);
                let request = EvalRequest {
                    prompt: view.prompt,
                    camera: view.camera,
                    image: view.image,
                    descriptor: view.descriptor,
                    context: ctx,
                };
                let parsed = match agent.respond(&request) {
                    Ok(raw) => parse_response(agent.id(), &view.camera.id, &raw, &ids),
                    Err(e) => {
                        log::warn!(
                            "agent {} view {} non-responsive: {e}",
                            agent.id(),
                            view.camera.id
                        );
                        AgentResponse::non_responsive(
                            agent.id(),
                            &view.camera.id,
                            String::new(),
                            e.to_string(),
                        )
                    }
                };
                slots.lock().expect("slot lock")[job] = Some(parsed);
            });
        }
    });
    let responses: Vec<AgentResponse> = slots
        .into_inner()
        .expect("slot lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect();
    let mut tensor = ScoreTensor::new(
        agents.iter().map(|a| a.id().to_string()).collect(),
        views.iter().map(|v| v.camera.id.clone()).collect(),
        ids,
    );
    for (job, r) in responses.iter().enumerate() {
        tensor.set(job / views.len(), job % views.len(), r);
    }
    if tensor.all_cells().next().is_none() {
        return Err(EvaluatorError::EvaluationUnavailable);
    }
    Ok(EnsembleResult { tensor, responses })
}
