use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::record::{FailureReason, StepRecord, TaskRecord};
use super::LoopError;
use crate::evaluator::{EvalTemplate, SubQuestionKey, Weights};
use crate::scene::ConstraintViolation;

/// A key needs at least this many failure steps before it can be flagged.
pub const MIN_FAILURE_STEPS: usize = 5;
/// Mean chosen-trajectory score on failure steps above which a key is biased.
pub const BIAS_SCORE_THRESHOLD: f64 = 7.0;
pub const WEIGHT_STEP: f64 = 0.05;
pub const WEIGHT_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyDiscrepancy {
    pub key: SubQuestionKey,
    /// Steps whose outcome contradicts a high score on this key.
    pub failure_steps: usize,
    /// Mean score the chosen trajectory got on those steps.
    pub mean_chosen_score: Option<f64>,
    pub biased: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub records_analyzed: usize,
    pub discrepancies: Vec<KeyDiscrepancy>,
    pub failure_patterns: Vec<String>,
    pub weight_deltas: BTreeMap<SubQuestionKey, f64>,
    pub prompt_additions: Vec<String>,
}

impl RefinementReport {
    pub fn biased_keys(&self) -> Vec<SubQuestionKey> {
        self.discrepancies
            .iter()
            .filter(|d| d.biased)
            .map(|d| d.key)
            .collect()
    }
}

/// Optional reviewer that may replace the rule-based report.
pub trait MetaAnalyst {
    fn review(&self, records: &[TaskRecord], report: &RefinementReport)
        -> Option<RefinementReport>;
}

fn failing_keys(record: &TaskRecord, index: usize, step: &StepRecord) -> Vec<SubQuestionKey> {
    let mut keys = Vec::new();
    let Some(outcome) = &step.outcome else {
        return keys;
    };
    if outcome.collision_occurred {
        keys.push(SubQuestionKey::Safety);
    }
    let signalled = step
        .signals
        .is_some_and(|s| s.subtask_transition || s.task_complete);
    let last_of_failed = !record.success && index + 1 == record.steps.len();
    if (signalled && !outcome.subtask_objective_met) || last_of_failed {
        keys.push(SubQuestionKey::TaskAlign);
    }
    if !outcome.constraint_violations.is_empty() {
        keys.push(SubQuestionKey::Physical);
    }
    if record.failure_reason == Some(FailureReason::MaxSteps) {
        keys.push(SubQuestionKey::Efficiency);
    }
    keys
}

fn addition(key: SubQuestionKey) -> &'static str {
    match key {
        SubQuestionKey::Safety => {
            "- Past runs rated safety high on paths that then collided. Give safety above 5 only when clearance is visible along the whole path."
        }
        SubQuestionKey::TaskAlign => {
            "- Past runs signalled progress the scene did not confirm. Raise transition or complete only when the end-effector is visibly at the goal."
        }
        SubQuestionKey::Efficiency => {
            "- Past runs ran out of steps. Prefer paths that close most of the remaining distance to the goal."
        }
        SubQuestionKey::Physical => {
            "- Past runs chose paths that broke physical limits such as the workspace edge or an empty grasp. Score physical strictly."
        }
    }
}

/// Compares chosen-trajectory scores with what actually happened.
pub fn analyze(records: &[TaskRecord]) -> RefinementReport {
    let mut sums: BTreeMap<SubQuestionKey, (usize, f64, usize)> = BTreeMap::new();
    let mut collided: BTreeMap<String, usize> = BTreeMap::new();
    let mut violations: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut spurious = 0;
    for record in records {
        spurious += record.spurious_completions as usize;
        for (i, step) in record.steps.iter().enumerate() {
            if let Some(o) = &step.outcome {
                for id in &o.collided_ids {
                    *collided.entry(id.clone()).or_default() += 1;
                }
                for v in &o.constraint_violations {
                    let name = match v {
                        ConstraintViolation::OutOfBounds { .. } => "out_of_bounds",
                        ConstraintViolation::Spacing { .. } => "spacing",
                        ConstraintViolation::GraspMiss { .. } => "grasp_miss",
                    };
                    *violations.entry(name).or_default() += 1;
                }
            }
            for key in failing_keys(record, i, step) {
                let e = sums.entry(key).or_default();
                e.0 += 1;
                if let Some(m) = step.chosen_mean(key) {
                    e.1 += m;
                    e.2 += 1;
                }
            }
        }
    }

    let discrepancies: Vec<KeyDiscrepancy> = SubQuestionKey::ALL
        .iter()
        .map(|&key| {
            let (n, total, scored) = sums.get(&key).copied().unwrap_or_default();
            let mean = (scored > 0).then(|| total / scored as f64);
            KeyDiscrepancy {
                key,
                failure_steps: n,
                mean_chosen_score: mean,
                biased: n >= MIN_FAILURE_STEPS && mean.is_some_and(|m| m >= BIAS_SCORE_THRESHOLD),
            }
        })
        .collect();

    let mut failure_patterns = Vec::new();
    for d in &discrepancies {
        if let Some(m) = d.mean_chosen_score {
            failure_patterns.push(format!(
                "{}: {} failure steps, chosen paths averaged {:.2}",
                d.key.as_str(),
                d.failure_steps,
                m
            ));
        }
    }
    for (id, n) in &collided {
        failure_patterns.push(format!("collision with {id}: {n} steps"));
    }
    for (name, n) in &violations {
        failure_patterns.push(format!("{name}: {n} occurrences"));
    }
    if spurious > 0 {
        failure_patterns.push(format!("spurious completion signals: {spurious}"));
    }

    let biased: Vec<SubQuestionKey> = discrepancies
        .iter()
        .filter(|d| d.biased)
        .map(|d| d.key)
        .collect();
    RefinementReport {
        records_analyzed: records.len(),
        weight_deltas: biased.iter().map(|&k| (k, WEIGHT_STEP)).collect(),
        prompt_additions: biased.iter().map(|&k| addition(k).to_string()).collect(),
        discrepancies,
        failure_patterns,
    }
}

/// Moves weight toward the biased keys.
///
/// Each biased key asks for [`WEIGHT_STEP`]. The total is taken from the
/// unbiased keys in proportion to their weight. No unbiased key may drop
/// by more than [`WEIGHT_STEP`] or below [`WEIGHT_FLOOR`]; when that would
/// happen every gain shrinks by the same factor.
pub fn shift_weights(w: &Weights, biased: &[SubQuestionKey]) -> Weights {
    let mut a = w.as_array();
    let is_biased = |i: usize| biased.iter().any(|k| k.index() == i);
    let gain_keys: Vec<usize> = (0..4).filter(|&i| is_biased(i)).collect();
    let give_keys: Vec<usize> = (0..4).filter(|&i| !is_biased(i)).collect();
    let give_total: f64 = give_keys.iter().map(|&i| a[i]).sum();
    if gain_keys.is_empty() || give_keys.is_empty() || give_total <= 0.0 {
        return *w;
    }
    let want = WEIGHT_STEP * gain_keys.len() as f64;
    let mut scale: f64 = 1.0;
    for &i in &give_keys {
        let take = want * a[i] / give_total;
        let room = (a[i] - WEIGHT_FLOOR).clamp(0.0, WEIGHT_STEP);
        if take > room {
            scale = scale.min(room / take);
        }
    }
    let moved = want * scale;
    for &i in &give_keys {
        a[i] -= moved * w.as_array()[i] / give_total;
    }
    for &i in &gain_keys {
        a[i] += moved / gain_keys.len() as f64;
    }
    let sum: f64 = a.iter().sum();
    Weights::from_array(a.map(|x| x / sum))
}

/// Next template version: shifted weights plus the report's extra rules.
///
/// A report with nothing to change returns `tpl` as is, version included.
pub fn apply_update(
    tpl: &EvalTemplate,
    report: &RefinementReport,
) -> Result<EvalTemplate, LoopError> {
    if report.weight_deltas.is_empty() && report.prompt_additions.is_empty() {
        return Ok(tpl.clone());
    }
    let mut next = tpl.clone();
    next.version = tpl
        .version
        .checked_add(1)
        .ok_or_else(|| LoopError::Config("template version overflow".into()))?;
    let biased: Vec<SubQuestionKey> = report.weight_deltas.keys().copied().collect();
    next.set_weights(shift_weights(&tpl.weights(), &biased));
    for line in &report.prompt_additions {
        if !next.rules.lines().any(|l| l.trim() == line.trim()) {
            if !next.rules.is_empty() && !next.rules.ends_with('\n') {
                next.rules.push('\n');
            }
            next.rules.push_str(line);
        }
    }
    next.validate()?;
    Ok(next)
}

/// Rule-based analysis, optionally overridden by `meta`, then the update.
pub fn refine(
    records: &[TaskRecord],
    tpl: &EvalTemplate,
    meta: Option<&dyn MetaAnalyst>,
) -> Result<(RefinementReport, EvalTemplate), LoopError> {
    let mut report = analyze(records);
    if let Some(reviewed) = meta.and_then(|m| m.review(records, &report)) {
        report = reviewed;
    }
    let next = apply_update(tpl, &report)?;
    Ok((report, next))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn safety_shift_takes_proportionally() {
        let w = shift_weights(&Weights::default(), &[SubQuestionKey::Safety]);
        let a = w.as_array();
        assert!((a[0] - 0.30).abs() < 1e-12);
        assert!((a[1] - (0.35 - 0.05 * 0.35 / 0.75)).abs() < 1e-12);
        assert!((a[2] - (0.20 - 0.05 * 0.20 / 0.75)).abs() < 1e-12);
        assert!((w.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn floor_shrinks_gains() {
        let w = Weights::from_array([0.06, 0.06, 0.08, 0.80]);
        let out = shift_weights(&w, &[SubQuestionKey::Physical]).as_array();
        assert!(out[0] >= WEIGHT_FLOOR - 1e-12 && out[1] >= WEIGHT_FLOOR - 1e-12);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out[3] > 0.80 && out[3] < 0.85);
    }

    #[test]
    fn nothing_biased_keeps_weights() {
        assert_eq!(shift_weights(&Weights::default(), &[]), Weights::default());
        assert_eq!(
            shift_weights(&Weights::default(), &SubQuestionKey::ALL),
            Weights::default()
        );
    }
}
