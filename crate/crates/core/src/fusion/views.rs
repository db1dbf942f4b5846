use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Result of running replacement iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub active: Vec<String>,
    pub swaps: usize,
    pub converged: bool,
}

fn score(scores: &BTreeMap<String, f64>, id: &str) -> f64 {
    scores.get(id).copied().unwrap_or(f64::NEG_INFINITY)
}

/// Iterated replacement: swap the worst active view for the best inactive one
/// while the latter scores strictly higher, for at most `max_swaps` swaps.
///
/// Ties pick the earliest view in `all_views` order. Missing scores count as
/// −∞. The returned active set keeps `all_views` order.
pub fn adaptive_view_selection(
    all_views: &[String],
    scores: &BTreeMap<String, f64>,
    active: &[String],
    max_swaps: usize,
) -> SelectionOutcome {
    let mut current: Vec<String> = all_views
        .iter()
        .filter(|v| active.contains(v))
        .cloned()
        .collect();
    let mut swaps = 0;
    let mut converged = false;
    while swaps < max_swaps {
        let worst = current
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (i, v)| {
                let s = score(scores, v);
                match acc {
                    Some((_, b)) if b <= s => acc,
                    _ => Some((i, s)),
                }
            });
        let best_outside = all_views.iter().filter(|v| !current.contains(v)).fold(
            None::<(&String, f64)>,
            |acc, v| {
                let s = score(scores, v);
                match acc {
                    Some((_, b)) if b >= s => acc,
                    _ => Some((v, s)),
                }
            },
        );
        match (worst, best_outside) {
            (Some((i, s_min)), Some((v, s_max))) if s_max > s_min => {
                current[i] = v.clone();
                swaps += 1;
                current = all_views
                    .iter()
                    .filter(|x| current.contains(x))
                    .cloned()
                    .collect();
            }
            _ => {
                converged = true;
                break;
            }
        }
    }
    SelectionOutcome {
        active: current,
        swaps,
        converged,
    }
}

/// Adaptive view selection state carried across control steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSelector {
    pub all_views: Vec<String>,
    pub active: Vec<String>,
    pub converged: bool,
    pub swaps_per_step: usize,
}

impl ViewSelector {
    /// Starts with `k` views spread evenly over `all_views`.
    pub fn new(all_views: Vec<String>, k: usize, swaps_per_step: usize) -> Self {
        let n = all_views.len();
        let k = k.min(n);
        let active = (0..k).map(|i| all_views[i * n / k].clone()).collect();
        Self {
            all_views,
            active,
            converged: false,
            swaps_per_step,
        }
    }

    pub fn with_active(all_views: Vec<String>, active: Vec<String>, swaps_per_step: usize) -> Self {
        Self {
            all_views,
            active,
            converged: false,
            swaps_per_step,
        }
    }

    /// Views that need a probe score this step: the inactive ones, until
    /// the selection has converged.
    pub fn needs_probe(&self) -> bool {
        !self.converged && self.swaps_per_step > 0
    }

    /// Runs up to this step's swap budget.
    pub fn update(&mut self, scores: &BTreeMap<String, f64>) -> usize {
        if !self.needs_probe() {
            return 0;
        }
        let out =
            adaptive_view_selection(&self.all_views, scores, &self.active, self.swaps_per_step);
        self.active = out.active;
        self.converged = out.converged;
        out.swaps
    }
}
