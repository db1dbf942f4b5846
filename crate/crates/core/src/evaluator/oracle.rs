use std::collections::BTreeMap;

use super::response::render_answer;
use super::{
    Agent, AgentError, AgentResponse, EvalContext, EvalRequest, GripperCommand, Signals, SubScores,
};
use crate::scene::{min_clearance, signed_distance, GRASP_RANGE};
use crate::trajectory::Trajectory;
use crate::views::ViewDescriptor;

/// The end-effector counts as at the goal inside this distance (m).
pub const TASK_COMPLETE_DISTANCE: f64 = 0.02;

fn to_score(x: f64) -> u8 {
    x.clamp(0.0, 10.0).round() as u8
}

fn score_trajectory(t: &Trajectory, ctx: &EvalContext<'_>) -> SubScores {
    let exempt = ctx.scene.collision_exempt_ids();
    let clearance = t
        .positions()
        .map(|p| min_clearance(p, ctx.scene, &exempt).0)
        .fold(f64::INFINITY, f64::min);
    let safety = if ctx.epsilon > 0.0 {
        to_score(10.0 * clearance / (5.0 * ctx.epsilon))
    } else if clearance >= 0.0 {
        10
    } else {
        0
    };
    let d_start = t.start().distance(ctx.goal);
    let d_end = t.end().distance(ctx.goal);
    let task_align = if d_start > 0.0 {
        to_score(10.0 * (1.0 - d_end / d_start).max(0.0))
    } else if d_end == 0.0 {
        10
    } else {
        0
    };
    let length = t.path_length();
    let efficiency = if length > 0.0 {
        to_score(10.0 * t.start().distance(t.end()) / length)
    } else {
        10
    };
    let physical = if t.max_spacing() <= ctx.epsilon / 2.0 + 1e-12 {
        10
    } else {
        5
    };
    SubScores {
        safety,
        task_align,
        efficiency,
        physical,
    }
}

/// Signals implied by executing `best`: grasp or release at the goal, and
/// transition or completion once the subtask's goal state is reached.
fn oracle_signals(best: &Trajectory, ctx: &EvalContext<'_>) -> Signals {
    let end = best.end();
    let reached = end.distance(ctx.goal) < TASK_COMPLETE_DISTANCE;
    let closed = ctx.scene.gripper().closed;
    let target_in_reach = ctx
        .target_id
        .and_then(|id| ctx.scene.object(id))
        .is_some_and(|o| o.graspable && signed_distance(end, o) <= GRASP_RANGE);
    let gripper = match ctx.required_gripper {
        Some(GripperCommand::Close) if !closed && reached && target_in_reach => {
            GripperCommand::Close
        }
        Some(GripperCommand::Open) if closed && reached => GripperCommand::Open,
        _ => GripperCommand::Hold,
    };
    let closed_after = match gripper {
        GripperCommand::Close => true,
        GripperCommand::Open => false,
        GripperCommand::Hold => closed,
    };
    let gripper_ok = match ctx.required_gripper {
        Some(GripperCommand::Close) => closed_after,
        Some(GripperCommand::Open) => !closed_after,
        _ => true,
    };
    let objective = reached && gripper_ok;
    Signals {
        subtask_transition: objective && !ctx.is_last_subtask,
        gripper,
        task_complete: objective && ctx.is_last_subtask,
    }
}

/// Deterministic geometric answer for one view.
///
/// Scores come from the scene geometry; only `q_view` depends on the view,
/// through the descriptor's waypoint visibility.
pub fn oracle_agent(
    agent_id: &str,
    descriptor: &ViewDescriptor,
    ctx: &EvalContext<'_>,
) -> AgentResponse {
    let scores: BTreeMap<u32, SubScores> = ctx
        .feasible
        .trajectories
        .iter()
        .map(|t| (t.id, score_trajectory(t, ctx)))
        .collect();
    let q_view = descriptor
        .mean_visibility()
        .map_or(0, |f| to_score(10.0 * f));
    let best = ctx
        .feasible
        .trajectories
        .iter()
        .map(|t| (ctx.weights.weighted(&scores[&t.id]), t))
        .fold(None::<(f64, &Trajectory)>, |acc, (s, t)| match acc {
            Some((bs, bt)) if bs > s || (bs == s && bt.id < t.id) => Some((bs, bt)),
            _ => Some((s, t)),
        });
    let signals = best
        .map(|(_, t)| oracle_signals(t, ctx))
        .unwrap_or_default();
    let mut r = AgentResponse {
        agent_id: agent_id.to_string(),
        camera_id: descriptor.camera_id.clone(),
        scores,
        q_view,
        signals,
        raw_text: String::new(),
        responsive: true,
        note: None,
    };
    r.raw_text = render_answer(&r);
    r
}

/// An [`Agent`] that answers with [`oracle_agent`].
#[derive(Debug, Clone)]
pub struct OracleAgent {
    id: String,
}

impl OracleAgent {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

impl Default for OracleAgent {
    fn default() -> Self {
        Self::new("oracle")
    }
}

impl Agent for OracleAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn respond(&self, request: &EvalRequest<'_>) -> Result<String, AgentError> {
        Ok(oracle_agent(&self.id, request.descriptor, request.context).raw_text)
    }
}
