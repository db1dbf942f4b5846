//! View confidence, confidence-weighted aggregation, trajectory selection,
//! adaptive view selection and signal voting.

mod views;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{CellScores, GripperCommand, ScoreTensor, Signals, Weights};

pub use views::{adaptive_view_selection, SelectionOutcome, ViewSelector};

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("no trajectory has scores to select from")]
    NoFeasibleDecision,
    #[error("view `{0}` has no responsive agents")]
    NoResponsiveAgents(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    /// Confidence decay with inter-agent disagreement.
    pub lambda_c: f64,
    /// Active views per step.
    pub k_views: usize,
    pub total_views: usize,
    /// View swaps allowed per control step.
    pub swaps_per_step: usize,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            lambda_c: 0.5,
            k_views: 3,
            total_views: 8,
            swaps_per_step: 2,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.lambda_c > 0.0 && self.lambda_c.is_finite()) {
            return Err(FusionError::InvalidArgument(format!(
                "lambda_c {} must be > 0",
                self.lambda_c
            )));
        }
        if self.k_views == 0 || self.k_views > self.total_views {
            return Err(FusionError::InvalidArgument(format!(
                "k_views {} must be in 1..={}",
                self.k_views, self.total_views
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewStats {
    pub camera_id: String,
    pub responsive_agents: usize,
    pub sigma: f64,
    pub q_view_mean: f64,
    pub confidence: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub chosen_id: u32,
    pub scores: BTreeMap<u32, f64>,
    pub signals: Signals,
    pub view_set: Vec<String>,
    pub view_stats: Vec<ViewStats>,
}

/// Disagreement of the responsive agents on view `v`: the square root of the
/// mean, over trajectories, of the population variance of weighted scores.
pub fn view_sigma(tensor: &ScoreTensor, w: &Weights, v: usize) -> Result<f64, FusionError> {
    let cells: Vec<&CellScores> = tensor.view_cells(v).collect();
    if cells.is_empty() {
        return Err(FusionError::NoResponsiveAgents(
            tensor.view_ids.get(v).cloned().unwrap_or_default(),
        ));
    }
    if cells.len() == 1 || tensor.trajectory_ids.is_empty() {
        return Ok(0.0);
    }
    let m = cells.len() as f64;
    let mut total = 0.0;
    for id in &tensor.trajectory_ids {
        let xs: Vec<f64> = cells.iter().map(|c| w.weighted(&c.scores[id])).collect();
        let mean = xs.iter().sum::<f64>() / m;
        total += xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
    }
    Ok((total / tensor.trajectory_ids.len() as f64).sqrt())
}

/// `C = q / (1 + λ·σ)`.
pub fn view_confidence(q_view: f64, sigma: f64, lambda_c: f64) -> f64 {
    q_view / (1.0 + lambda_c * sigma)
}

/// `C′_v = C_v / Σ C`, or uniform when every confidence is zero.
pub fn normalize_confidences(stats: &mut [ViewStats]) {
    let total: f64 = stats.iter().map(|s| s.confidence).sum();
    let n = stats.len() as f64;
    for s in stats.iter_mut() {
        s.normalized = if total > 0.0 {
            s.confidence / total
        } else {
            1.0 / n
        };
    }
}

/// Stats for every view with at least one responsive agent, normalized.
pub fn compute_view_stats(tensor: &ScoreTensor, w: &Weights, lambda_c: f64) -> Vec<ViewStats> {
    let mut stats: Vec<ViewStats> = (0..tensor.view_ids.len())
        .filter_map(|v| {
            let sigma = view_sigma(tensor, w, v).ok()?;
            let cells: Vec<&CellScores> = tensor.view_cells(v).collect();
            let q = cells.iter().map(|c| f64::from(c.q_view)).sum::<f64>() / cells.len() as f64;
            Some(ViewStats {
                camera_id: tensor.view_ids[v].clone(),
                responsive_agents: cells.len(),
                sigma,
                q_view_mean: q,
                confidence: view_confidence(q, sigma, lambda_c),
                normalized: 0.0,
            })
        })
        .collect();
    normalize_confidences(&mut stats);
    stats
}

/// `S_j = Σ_v C′_v · (1/M′_v) Σ_m Σ_k w_k·s_{m,v,j,k}` over the views in `stats`.
pub fn aggregate(tensor: &ScoreTensor, w: &Weights, stats: &[ViewStats]) -> BTreeMap<u32, f64> {
    let mut out = BTreeMap::new();
    for id in &tensor.trajectory_ids {
        let mut s = 0.0;
        let mut seen = false;
        for st in stats {
            let Some(v) = tensor.view_index(&st.camera_id) else {
                continue;
            };
            let vals: Vec<f64> = tensor
                .view_cells(v)
                .filter_map(|c| c.scores.get(id))
                .map(|sc| w.weighted(sc))
                .collect();
            if vals.is_empty() {
                continue;
            }
            seen = true;
            s += st.normalized * vals.iter().sum::<f64>() / vals.len() as f64;
        }
        if seen {
            out.insert(*id, s);
        }
    }
    out
}

/// Highest score, smallest id on ties.
pub fn select(scores: &BTreeMap<u32, f64>) -> Result<u32, FusionError> {
    let mut best: Option<(u32, f64)> = None;
    for (&id, &s) in scores {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((id, s));
        }
    }
    best.map(|(id, _)| id)
        .ok_or(FusionError::NoFeasibleDecision)
}

/// Majority vote over responsive answers. A flag needs strictly more than half;
/// the gripper command needs a unique plurality, otherwise hold.
pub fn vote_signals<'a>(cells: impl IntoIterator<Item = &'a Signals>) -> Signals {
    let mut n = 0usize;
    let (mut transition, mut complete) = (0usize, 0usize);
    let mut grip: BTreeMap<GripperCommand, usize> = BTreeMap::new();
    for s in cells {
        n += 1;
        transition += usize::from(s.subtask_transition);
        complete += usize::from(s.task_complete);
        *grip.entry(s.gripper).or_default() += 1;
    }
    let top = grip.values().copied().max().unwrap_or(0);
    let leaders: Vec<GripperCommand> = grip
        .iter()
        .filter(|(_, &c)| c == top)
        .map(|(g, _)| *g)
        .collect();
    Signals {
        subtask_transition: 2 * transition > n,
        gripper: if leaders.len() == 1 {
            leaders[0]
        } else {
            GripperCommand::Hold
        },
        task_complete: 2 * complete > n,
    }
}

/// Full fusion of one step's tensor into a decision.
pub fn decide(
    tensor: &ScoreTensor,
    w: &Weights,
    params: &FusionParams,
) -> Result<Decision, FusionError> {
    let view_stats = compute_view_stats(tensor, w, params.lambda_c);
    let scores = aggregate(tensor, w, &view_stats);
    let chosen_id = select(&scores)?;
    let signals = vote_signals(tensor.all_cells().map(|c| &c.signals));
    Ok(Decision {
        chosen_id,
        scores,
        signals,
        view_set: tensor.view_ids.clone(),
        view_stats,
    })
}
