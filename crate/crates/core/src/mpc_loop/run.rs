use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TaskConfig;
use super::record::{
    CandidateSummary, FailureReason, ResponseLog, StepRecord, TaskRecord, MEMORY_SCHEMA_VERSION,
};
use super::trace::{DecisionLog, TraceWriter};
use super::LoopError;
use crate::evaluator::{
    evaluate_ensemble, instantiate_prompt, parse_response, Agent, EvalContext, EvalRequest,
    EvalTemplate, EvaluatorError, GripperCommand, ViewInput, DEFAULT_PARALLELISM,
    TASK_COMPLETE_DISTANCE,
};
use crate::fusion::{decide, ViewSelector};
use crate::sampler::{filter_constraints, reset_subtask, sample_candidates, AnnealState};
use crate::scene::{ConstraintViolation, Scene};
use crate::trajectory::{CandidateSet, FeasibleSet};
use crate::views::{default_camera_ring, render_view, Camera, ViewDescriptor, ViewImage};

/// Sampling attempts per step before the feasible set counts as exhausted.
pub const MAX_SAMPLING_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Fixed active views; disables adaptive selection.
    pub fixed_views: Option<Vec<String>>,
    pub parallelism: usize,
    pub trace_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            fixed_views: None,
            parallelism: DEFAULT_PARALLELISM,
            trace_dir: None,
        }
    }
}

fn render_all(
    scene: &Scene,
    feas: &FeasibleSet,
    cams: &[&Camera],
) -> Vec<(ViewImage, ViewDescriptor)> {
    std::thread::scope(|s| {
        let handles: Vec<_> = cams
            .iter()
            .map(|c| s.spawn(move || render_view(scene, feas, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("render thread"))
            .collect()
    })
}

fn objective_met(scene: &Scene, goal: &super::SubtaskGoal) -> bool {
    let reached = scene.ee_pose().position.distance(goal.goal_position) < TASK_COMPLETE_DISTANCE;
    let gripper_ok = match goal.required_gripper {
        Some(GripperCommand::Close) => scene.gripper().closed,
        Some(GripperCommand::Open) => !scene.gripper().closed,
        _ => true,
    };
    reached && gripper_ok
}

/// Runs the closed loop on `scene` until success, exhaustion or `max_steps`.
///
/// The scene is left in its final state. Per-step artifacts go to
/// `opts.trace_dir` when set.
pub fn run_task(
    scene: &mut Scene,
    cfg: &TaskConfig,
    tpl: &EvalTemplate,
    agents: &[Arc<dyn Agent>],
    opts: &RunOptions,
) -> Result<TaskRecord, LoopError> {
    cfg.validate()?;
    tpl.validate()?;
    if agents.is_empty() {
        return Err(LoopError::Config("no agents configured".into()));
    }
    let weights = tpl.weights();
    let eps = cfg.sampler.epsilon;
    let ring = default_camera_ring(scene.workspace(), cfg.camera)?;
    let all_ids: Vec<String> = ring.iter().map(|c| c.id.clone()).collect();
    let mut selector = match &opts.fixed_views {
        Some(v) => {
            if v.is_empty() {
                return Err(LoopError::Config(
                    "--views needs at least one camera".into(),
                ));
            }
            if let Some(bad) = v.iter().find(|id| !all_ids.contains(id)) {
                return Err(LoopError::Config(format!("unknown camera `{bad}`")));
            }
            ViewSelector::with_active(all_ids.clone(), v.clone(), 0)
        }
        None => ViewSelector::new(
            all_ids.clone(),
            cfg.fusion.k_views,
            cfg.fusion.swaps_per_step,
        ),
    };
    let trace = opts.trace_dir.as_ref().map(TraceWriter::new);

    scene.set_active_target(cfg.subtasks[0].target_object_id.as_deref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut anneal = AnnealState::new(cfg.sampler.anneal)?;
    let mut bias = cfg.sampler.new_bias();
    let mut subtask = 0usize;

    let mut record = TaskRecord {
        schema_version: MEMORY_SCHEMA_VERSION,
        config: cfg.clone(),
        template_version: tpl.version,
        steps: Vec::new(),
        success: false,
        failure_reason: None,
        spurious_completions: 0,
        gripper_closes: 0,
        gripper_opens: 0,
        collisions: 0,
    };

    for t in 0..cfg.max_steps {
        let goal = cfg.subtasks[subtask].clone();
        let target_id = goal.target_object_id.as_deref();
        let is_last = subtask + 1 == cfg.subtasks.len();
        let (radius, theta_deg) = anneal.schedule();

        let mut attempts = 0;
        let (cands, feas) = loop {
            // Retries widen the search back to the initial radius and angle.
            let state = if attempts == 0 {
                anneal
            } else {
                AnnealState {
                    subtask_step: 0,
                    ..anneal
                }
            };
            attempts += 1;
            let cands = sample_candidates(scene, &state, &bias, &cfg.sampler, t, &mut rng)?;
            let feas = filter_constraints(&cands, scene, eps, target_id)?;
            if !feas.is_empty() || attempts >= MAX_SAMPLING_ATTEMPTS {
                break (cands, feas);
            }
            log::info!("step {t}: empty feasible set, resampling");
        };

        let mut step = StepRecord {
            step: t,
            subtask_index: subtask,
            radius,
            theta_deg,
            sampling_attempts: attempts,
            candidates: summarize(&cands),
            feasible_ids: feas.ids(),
            template_version: tpl.version,
            active_views: selector.active.clone(),
            responses: Vec::new(),
            tensor: None,
            view_stats: Vec::new(),
            scores: BTreeMap::new(),
            chosen_id: None,
            signals: None,
            gripper_event: None,
            subtask_advanced: false,
            spurious_completion: false,
            outcome: None,
            evaluation_error: None,
        };
        if feas.is_empty() {
            log::warn!("step {t}: feasible set exhausted after {attempts} attempts");
            record.steps.push(step);
            record.failure_reason = Some(FailureReason::FeasibleSetExhausted);
            return Ok(record);
        }

        let probing = selector.needs_probe();
        let render_ids: Vec<String> = if probing {
            all_ids.clone()
        } else {
            selector.active.clone()
        };
        let cams: Vec<&Camera> = render_ids
            .iter()
            .map(|id| {
                ring.iter()
                    .find(|c| &c.id == id)
                    .expect("validated camera id")
            })
            .collect();
        let rendered = render_all(scene, &feas, &cams);
        let ids = feas.ids();
        let prompts: Vec<String> = cams
            .iter()
            .map(|c| instantiate_prompt(tpl, &cfg.task_description, t, &ids, &c.id))
            .collect::<Result<_, _>>()?;
        if let Some(tw) = &trace {
            for (i, (img, desc)) in rendered.iter().enumerate() {
                if selector.active.contains(&cams[i].id) {
                    tw.write_view(t, img, desc, &prompts[i])?;
                }
            }
        }

        let ctx = EvalContext {
            scene,
            feasible: &feas,
            goal: goal.goal_position,
            target_id,
            epsilon: eps,
            weights,
            required_gripper: goal.required_gripper,
            is_last_subtask: is_last,
        };
        let active_idx: Vec<usize> = selector
            .active
            .iter()
            .map(|id| {
                render_ids
                    .iter()
                    .position(|r| r == id)
                    .expect("active view rendered")
            })
            .collect();
        let inputs: Vec<ViewInput<'_>> = active_idx
            .iter()
            .map(|&i| ViewInput {
                camera: cams[i],
                image: &rendered[i].0,
                descriptor: &rendered[i].1,
                prompt: &prompts[i],
            })
            .collect();
        let ensemble = match evaluate_ensemble(agents, &inputs, &ctx, opts.parallelism) {
            Ok(e) => e,
            Err(EvaluatorError::EvaluationUnavailable) => {
                log::warn!("step {t}: no usable evaluation, skipping execution");
                step.evaluation_error = Some(EvaluatorError::EvaluationUnavailable.to_string());
                record.steps.push(step);
                anneal.advance();
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        step.responses = ensemble.responses.iter().map(ResponseLog::from).collect();
        if let Some(tw) = &trace {
            tw.write_responses(t, &step.responses)?;
        }
        let decision = decide(&ensemble.tensor, &weights, &cfg.fusion)?;
        if let Some(tw) = &trace {
            tw.write_decision(&DecisionLog {
                step: t,
                weights,
                fusion: cfg.fusion,
                tensor: ensemble.tensor.clone(),
                decision: decision.clone(),
            })?;
        }

        if probing {
            let mut view_scores: BTreeMap<String, f64> = decision
                .view_stats
                .iter()
                .map(|s| (s.camera_id.clone(), s.confidence))
                .collect();
            let probe_agent = &agents[0];
            for (i, cam) in cams.iter().enumerate() {
                if selector.active.contains(&cam.id) {
                    continue;
                }
                let request = EvalRequest {
                    prompt: &prompts[i],
                    camera: cam,
                    image: &rendered[i].0,
                    descriptor: &rendered[i].1,
                    context: &ctx,
                };
                // A single agent has no spread, so its confidence is q_view.
                let score = match probe_agent.respond(&request) {
                    Ok(raw) => {
                        let r = parse_response(probe_agent.id(), &cam.id, &raw, &ids);
                        if r.responsive {
                            f64::from(r.q_view)
                        } else {
                            0.0
                        }
                    }
                    Err(e) => {
                        log::warn!("probe of {} failed: {e}", cam.id);
                        0.0
                    }
                };
                view_scores.insert(cam.id.clone(), score);
            }
            for id in &selector.active {
                view_scores.entry(id.clone()).or_insert(0.0);
            }
            let swaps = selector.update(&view_scores);
            if swaps > 0 {
                log::info!(
                    "step {t}: swapped {swaps} views, active now {:?}",
                    selector.active
                );
            }
        }

        let chosen = feas
            .get(decision.chosen_id)
            .expect("chosen id is feasible")
            .clone();
        let s_chosen = decision.scores[&decision.chosen_id];
        let mut outcome = scene.execute(&chosen, eps)?;
        if outcome.collision_occurred {
            record.collisions += 1;
        }

        let signals = decision.signals;
        match signals.gripper {
            GripperCommand::Close if !scene.gripper().closed => {
                step.gripper_event = Some(GripperCommand::Close);
                match scene.close_gripper() {
                    Some(id) => {
                        log::info!("step {t}: grasped {id}");
                        record.gripper_closes += 1;
                    }
                    None => outcome
                        .constraint_violations
                        .push(ConstraintViolation::GraspMiss {
                            waypoint: chosen.waypoints.len() - 1,
                        }),
                }
            }
            GripperCommand::Open if scene.gripper().closed => {
                step.gripper_event = Some(GripperCommand::Open);
                scene.open_gripper();
                record.gripper_opens += 1;
            }
            _ => {}
        }
        let objective = objective_met(scene, &goal);
        outcome.subtask_objective_met = objective;

        if signals.task_complete {
            if is_last && objective {
                record.success = true;
            } else {
                log::warn!("step {t}: completion signalled but the objective is not met");
                step.spurious_completion = true;
                record.spurious_completions += 1;
            }
        }
        let mut reset = false;
        if !record.success && signals.subtask_transition {
            if is_last {
                log::info!("step {t}: transition signalled on the last subtask, ignored");
            } else {
                subtask += 1;
                scene.set_active_target(cfg.subtasks[subtask].target_object_id.as_deref())?;
                reset_subtask(&mut anneal, &mut bias);
                step.subtask_advanced = true;
                reset = true;
            }
        }
        if !reset {
            bias.update(chosen.end() - chosen.start(), s_chosen);
            anneal.advance();
        }

        step.tensor = Some(ensemble.tensor);
        step.view_stats = decision.view_stats;
        step.scores = decision.scores;
        step.chosen_id = Some(decision.chosen_id);
        step.signals = Some(signals);
        step.outcome = Some(outcome);
        record.steps.push(step);
        if record.success {
            return Ok(record);
        }
    }
    record.failure_reason = Some(FailureReason::MaxSteps);
    Ok(record)
}

fn summarize(cands: &CandidateSet) -> Vec<CandidateSummary> {
    cands
        .trajectories
        .iter()
        .map(|t| CandidateSummary {
            id: t.id,
            end: t.end(),
        })
        .collect()
}
