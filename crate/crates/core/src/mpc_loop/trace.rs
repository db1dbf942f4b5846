use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LoopError;
use crate::evaluator::{ScoreTensor, Weights};
use crate::fusion::{decide, Decision, FusionParams};
use crate::views::{ViewDescriptor, ViewImage};

/// Scores may differ by this much between a logged and a replayed decision.
pub const REPLAY_SCORE_TOLERANCE: f64 = 1e-12;

/// Everything fusion needs to reproduce one step's decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLog {
    pub step: u32,
    pub weights: Weights,
    pub fusion: FusionParams,
    pub tensor: ScoreTensor,
    pub decision: Decision,
}

/// Writes per-step artifacts under `<root>/steps/<t>/`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceWriter {
    root: PathBuf,
}

fn io_err(path: &Path, source: std::io::Error) -> LoopError {
    LoopError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), LoopError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

impl TraceWriter {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn step_dir(&self, step: u32) -> PathBuf {
        self.root.join("steps").join(step.to_string())
    }

    fn ensure_step_dir(&self, step: u32) -> Result<PathBuf, LoopError> {
        let dir = self.step_dir(step);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(dir)
    }

    /// Writes `<camera>.ppm`, `<camera>.descriptor.json` and `prompt_<camera>.txt`.
    pub fn write_view(
        &self,
        step: u32,
        image: &ViewImage,
        descriptor: &ViewDescriptor,
        prompt: &str,
    ) -> Result<(), LoopError> {
        let dir = self.ensure_step_dir(step)?;
        let cam = &image.camera_id;
        write(&dir.join(format!("{cam}.ppm")), &image.canvas.to_ppm())?;
        write(
            &dir.join(format!("{cam}.descriptor.json")),
            serde_json::to_string_pretty(descriptor)?.as_bytes(),
        )?;
        write(&dir.join(format!("prompt_{cam}.txt")), prompt.as_bytes())
    }

    pub fn write_responses<T: Serialize>(&self, step: u32, responses: &T) -> Result<(), LoopError> {
        let dir = self.ensure_step_dir(step)?;
        write(
            &dir.join("responses.json"),
            serde_json::to_string_pretty(responses)?.as_bytes(),
        )
    }

    pub fn write_decision(&self, log: &DecisionLog) -> Result<(), LoopError> {
        let dir = self.ensure_step_dir(log.step)?;
        write(
            &dir.join("decision.json"),
            serde_json::to_string_pretty(log)?.as_bytes(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMismatch {
    pub step: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayReport {
    pub steps_checked: usize,
    pub mismatches: Vec<ReplayMismatch>,
}

impl ReplayReport {
    pub fn is_consistent(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn compare(log: &DecisionLog) -> Option<String> {
    let again = match decide(&log.tensor, &log.weights, &log.fusion) {
        Ok(d) => d,
        Err(e) => return Some(format!("fusion failed on logged tensor: {e}")),
    };
    let want = &log.decision;
    if again.chosen_id != want.chosen_id {
        return Some(format!(
            "chosen trajectory T{} but logged T{}",
            again.chosen_id, want.chosen_id
        ));
    }
    if again.signals != want.signals {
        return Some(format!(
            "signals {:?} but logged {:?}",
            again.signals, want.signals
        ));
    }
    if again.scores.len() != want.scores.len() || again.scores.keys().ne(want.scores.keys()) {
        return Some("trajectory ids differ from the logged scores".into());
    }
    for (id, s) in &again.scores {
        let logged = want.scores[id];
        if (s - logged).abs() > REPLAY_SCORE_TOLERANCE {
            return Some(format!("score of T{id} is {s} but logged {logged}"));
        }
    }
    None
}

/// Recomputes every logged decision under `<trace>/steps/` from its tensor.
pub fn replay_trace(trace_dir: impl AsRef<Path>) -> Result<ReplayReport, LoopError> {
    let steps_dir = trace_dir.as_ref().join("steps");
    let entries = fs::read_dir(&steps_dir).map_err(|e| io_err(&steps_dir, e))?;
    let mut steps: Vec<(u32, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| io_err(&steps_dir, e))?;
        let Some(t) = entry
            .file_name()
            .to_str()
            .and_then(|s| s.parse::<u32>().ok())
        else {
            continue;
        };
        let path = entry.path().join("decision.json");
        if path.is_file() {
            steps.push((t, path));
        }
    }
    steps.sort();
    if steps.is_empty() {
        return Err(LoopError::Config(format!(
            "no decision logs under {}",
            steps_dir.display()
        )));
    }
    let mut report = ReplayReport::default();
    for (t, path) in steps {
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        report.steps_checked += 1;
        let log: DecisionLog = match serde_json::from_str(&text) {
            Ok(l) => l,
            Err(e) => {
                report.mismatches.push(ReplayMismatch {
                    step: t,
                    reason: format!("unreadable decision log: {e}"),
                });
                continue;
            }
        };
        if let Some(reason) = compare(&log) {
            report.mismatches.push(ReplayMismatch { step: t, reason });
        }
    }
    Ok(report)
}
