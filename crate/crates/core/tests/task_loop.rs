mod common;

use std::fs;
use std::sync::Arc;

use common::{
    clean_records, collision_biased_records, fixture, outcome, synthetic_record, synthetic_step,
};
use vqa_mpc::evaluator::{
    default_template, Agent, GripperCommand, OracleAgent, Signals, SubQuestionKey,
};
use vqa_mpc::mpc_loop::{
    analyze, apply_update, refine, replay_trace, run_task, ExperienceMemory, FailureReason,
    MetaAnalyst, RefinementReport, RunOptions, TaskConfig, TaskRecord,
};
use vqa_mpc::scene::{load_scene, Scene};

fn oracle() -> Vec<Arc<dyn Agent>> {
    vec![Arc::new(OracleAgent::default())]
}

fn load(name: &str) -> (Scene, TaskConfig) {
    (
        load_scene(fixture(&format!("scenes/{name}.json"))).unwrap(),
        TaskConfig::load(fixture(&format!("tasks/{name}.json"))).unwrap(),
    )
}

fn run(name: &str, seed: u64, opts: &RunOptions) -> TaskRecord {
    let (mut scene, mut cfg) = load(name);
    cfg.seed = seed;
    run_task(&mut scene, &cfg, &default_template(), &oracle(), opts).unwrap()
}

#[test]
fn reach_succeeds_without_collisions() {
    let r = run("reach", 3, &RunOptions::default());
    assert!(r.success);
    assert!(r.steps.len() <= 15);
    assert!(r
        .steps
        .iter()
        .all(|s| !s.outcome.as_ref().unwrap().collision_occurred));
}

#[test]
fn executed_trajectory_is_from_feasible_set() {
    let r = run("pick_place", 2, &RunOptions::default());
    for s in &r.steps {
        if let Some(id) = s.chosen_id {
            assert!(s.feasible_ids.contains(&id), "step {}", s.step);
            assert!(s.scores.contains_key(&id));
        }
    }
}

#[test]
fn walled_goal_fails() {
    let r = run("walled_goal", 1, &RunOptions::default());
    assert!(!r.success);
    assert!(matches!(
        r.failure_reason,
        Some(FailureReason::MaxSteps | FailureReason::FeasibleSetExhausted)
    ));
    assert_eq!(r.collisions, 0);
}

#[test]
fn pick_place_closes_once_at_subtask_boundary() {
    let r = run("pick_place", 4, &RunOptions::default());
    assert!(r.success);
    assert_eq!((r.gripper_closes, r.gripper_opens), (1, 1));
    let close_step = r
        .steps
        .iter()
        .position(|s| s.gripper_event == Some(GripperCommand::Close))
        .unwrap();
    let advanced: Vec<usize> = r
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.subtask_advanced)
        .map(|(i, _)| i)
        .collect();
    assert_eq!(advanced, vec![close_step]);
    // Every later step works on the second subtask.
    assert!(r.steps[close_step + 1..]
        .iter()
        .all(|s| s.subtask_index == 1));
}

#[test]
fn subtask_reset_matches_voted_transitions() {
    let r = run("pick_place", 6, &RunOptions::default());
    for (i, s) in r.steps.iter().enumerate() {
        let voted = s.signals.is_some_and(|g| g.subtask_transition) && s.subtask_index == 0;
        assert_eq!(s.subtask_advanced, voted, "step {i}");
        if s.subtask_advanced {
            // The schedule restarts from its initial radius.
            assert_eq!(r.steps[i + 1].radius, 0.25);
        }
    }
}

#[test]
fn same_seed_same_record() {
    let a = serde_json::to_string(&run("pick_place", 11, &RunOptions::default())).unwrap();
    let b = serde_json::to_string(&run("pick_place", 11, &RunOptions::default())).unwrap();
    assert_eq!(a, b);
    let c = serde_json::to_string(&run("pick_place", 12, &RunOptions::default())).unwrap();
    assert_ne!(a, c);
}

#[test]
fn fixed_views_stay_fixed() {
    let opts = RunOptions {
        fixed_views: Some(vec!["view2".into(), "view5".into()]),
        ..RunOptions::default()
    };
    let r = run("reach", 5, &opts);
    assert!(r.steps.iter().all(|s| s.active_views == ["view2", "view5"]));
    let bad = RunOptions {
        fixed_views: Some(vec!["view12".into()]),
        ..RunOptions::default()
    };
    let (mut scene, cfg) = load("reach");
    assert!(run_task(&mut scene, &cfg, &default_template(), &oracle(), &bad).is_err());
}

#[test]
fn adaptive_views_keep_k_active() {
    let r = run("pick_place", 1, &RunOptions::default());
    for s in &r.steps {
        assert_eq!(s.active_views.len(), 3);
        let mut v = s.active_views.clone();
        v.dedup();
        assert_eq!(v.len(), 3);
    }
}

#[test]
fn memory_round_trip_and_append_only() {
    let dir = tempfile::tempdir().unwrap();
    let mem = ExperienceMemory::new(dir.path().join("exp.ndjson"));
    assert!(mem.load().unwrap().records.is_empty());
    let a = run("reach", 1, &RunOptions::default());
    let b = run("reach", 2, &RunOptions::default());
    mem.append(&a).unwrap();
    assert_eq!(mem.load().unwrap().records.len(), 1);
    let first = fs::read(mem.path()).unwrap();
    mem.append(&b).unwrap();
    let both = fs::read(mem.path()).unwrap();
    assert_eq!(&both[..first.len()], &first[..]);
    let loaded = mem.load().unwrap();
    assert_eq!(loaded.records, vec![a, b]);
    assert!(loaded.skipped.is_empty());
}

#[test]
fn malformed_memory_lines_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let mem = ExperienceMemory::new(dir.path().join("exp.ndjson"));
    mem.append(&clean_records(1)[0]).unwrap();
    fs::OpenOptions::new()
        .append(true)
        .open(mem.path())
        .and_then(|mut f| std::io::Write::write_all(&mut f, b"{\"broken\": \n"))
        .unwrap();
    mem.append(&clean_records(1)[0]).unwrap();
    let loaded = mem.load().unwrap();
    assert_eq!(loaded.records.len(), 2);
    assert_eq!(loaded.skipped.len(), 1);
    assert_eq!(loaded.skipped[0].line, 2);
}

#[test]
fn trace_replays_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        trace_dir: Some(dir.path().to_path_buf()),
        ..RunOptions::default()
    };
    let r = run("pick_place", 3, &opts);
    let report = replay_trace(dir.path()).unwrap();
    assert!(report.is_consistent(), "{:?}", report.mismatches);
    assert_eq!(
        report.steps_checked,
        r.steps.iter().filter(|s| s.chosen_id.is_some()).count()
    );

    let step0 = dir.path().join("steps/0");
    for f in [
        "view1.ppm",
        "view1.descriptor.json",
        "prompt_view1.txt",
        "responses.json",
        "decision.json",
    ] {
        assert!(step0.join(f).is_file(), "{f}");
    }

    // Lower every logged safety score of the chosen trajectory.
    let path = step0.join("decision.json");
    let mut log: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let chosen = log["decision"]["chosen_id"].as_u64().unwrap().to_string();
    for row in log["tensor"]["cells"].as_array_mut().unwrap() {
        for cell in row.as_array_mut().unwrap() {
            if !cell.is_null() {
                cell["scores"][&chosen]["safety"] = 0.into();
            }
        }
    }
    fs::write(&path, serde_json::to_string(&log).unwrap()).unwrap();
    let report = replay_trace(dir.path()).unwrap();
    assert_eq!(report.mismatches.len(), 1);
    assert_eq!(report.mismatches[0].step, 0);
}

#[test]
fn replay_of_empty_dir_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(replay_trace(dir.path()).is_err());
    fs::create_dir(dir.path().join("steps")).unwrap();
    assert!(replay_trace(dir.path()).is_err());
}

#[test]
fn analyze_flags_collision_bias() {
    let report = analyze(&collision_biased_records(5));
    assert_eq!(report.biased_keys(), vec![SubQuestionKey::Safety]);
    let safety = &report.discrepancies[0];
    assert_eq!(safety.failure_steps, 5);
    assert_eq!(safety.mean_chosen_score, Some(9.0));
    assert_eq!(
        report.weight_deltas.get(&SubQuestionKey::Safety),
        Some(&0.05)
    );
    assert_eq!(report.prompt_additions.len(), 1);
    assert!(report.failure_patterns.iter().any(|p| p.contains("rock")));
}

#[test]
fn analyze_threshold_needs_five_steps() {
    let report = analyze(&collision_biased_records(4));
    assert!(report.biased_keys().is_empty());
    assert!(report.weight_deltas.is_empty());
}

#[test]
fn analyze_ignores_low_scored_failures() {
    let steps = (0..6)
        .map(|t| {
            synthetic_step(
                t,
                [3, 8, 8, 10],
                outcome(Some("rock"), Vec::new()),
                Signals::default(),
            )
        })
        .collect();
    let report = analyze(&[synthetic_record(steps, true)]);
    assert!(report.biased_keys().is_empty());
}

#[test]
fn analyze_physical_failures() {
    let v = vec![vqa_mpc::scene::ConstraintViolation::GraspMiss { waypoint: 3 }];
    let steps = (0..5)
        .map(|t| {
            synthetic_step(
                t,
                [9, 8, 8, 9],
                outcome(None, v.clone()),
                Signals::default(),
            )
        })
        .collect();
    let report = analyze(&[synthetic_record(steps, true)]);
    assert_eq!(report.biased_keys(), vec![SubQuestionKey::Physical]);
}

#[test]
fn empty_and_clean_memories_change_nothing() {
    let tpl = default_template();
    for records in [Vec::new(), clean_records(6)] {
        let report = analyze(&records);
        assert!(report.weight_deltas.is_empty());
        assert_eq!(apply_update(&tpl, &report).unwrap(), tpl);
    }
}

#[test]
fn repeated_updates_respect_floor_and_sum() {
    let mut tpl = default_template();
    let report = analyze(&collision_biased_records(8));
    for _ in 0..40 {
        tpl = apply_update(&tpl, &report).unwrap();
        let w = tpl.weights().as_array();
        assert!(w.iter().all(|x| *x >= 0.05 - 1e-12), "{w:?}");
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert_eq!(tpl.version, 41);
    // The extra rule is added once, not once per update.
    assert_eq!(tpl.rules.matches("Past runs rated safety").count(), 1);
}

struct Override;

impl MetaAnalyst for Override {
    fn review(&self, _: &[TaskRecord], report: &RefinementReport) -> Option<RefinementReport> {
        let mut r = report.clone();
        r.weight_deltas.clear();
        r.weight_deltas.insert(SubQuestionKey::Efficiency, 0.05);
        r.prompt_additions.clear();
        Some(r)
    }
}

#[test]
fn meta_analyst_can_replace_report() {
    let tpl = default_template();
    let (report, next) = refine(&collision_biased_records(5), &tpl, Some(&Override)).unwrap();
    assert!(report
        .weight_deltas
        .contains_key(&SubQuestionKey::Efficiency));
    assert!(next.weights().efficiency > tpl.weights().efficiency);
    assert_eq!(next.weights().safety, 0.25 - 0.05 * 0.25 / 0.8);
}

#[test]
fn bundled_scenes_load() {
    let tape = load_scene(fixture("scenes/tape_stack.json")).unwrap();
    let ids: Vec<&str> = tape.objects().iter().map(|o| o.id.as_str()).collect();
    assert_eq!(ids.len(), 4);
    assert!(ids.contains(&"tape_1") && ids.contains(&"stack_zone"));
    for name in ["reach", "pick_place", "walled_goal"] {
        load_scene(fixture(&format!("scenes/{name}.json"))).unwrap();
        TaskConfig::load(fixture(&format!("tasks/{name}.json"))).unwrap();
    }
}
