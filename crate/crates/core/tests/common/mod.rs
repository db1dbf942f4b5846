#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use vqa_mpc::evaluator::{CellScores, GripperCommand, ScoreTensor, Signals, SubScores};
use vqa_mpc::geometry::{Pose, Vec3};
use vqa_mpc::mpc_loop::{FailureReason, StepRecord, TaskConfig, TaskRecord, MEMORY_SCHEMA_VERSION};
use vqa_mpc::scene::{ConstraintViolation, ExecutionOutcome};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

pub fn golden(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(rel)
}

#[derive(Debug, Clone)]
pub struct MockRequest {
    pub path: String,
    pub headers: BTreeMap<String, String>,
    pub body: Value,
}

impl MockRequest {
    pub fn model(&self) -> &str {
        self.body["model"].as_str().unwrap_or_default()
    }

    pub fn prompt(&self) -> &str {
        self.body["messages"][0]["content"][0]["text"]
            .as_str()
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone)]
pub struct MockReply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl MockReply {
    pub fn ok_content(content: &str) -> Self {
        Self {
            status: 200,
            body: json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
                .to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn status(status: u16) -> Self {
        Self {
            status,
            body: json!({"error": {"message": "scripted failure"}}).to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn delayed(mut self, d: Duration) -> Self {
        self.delay = d;
        self
    }
}

type Handler = dyn Fn(&MockRequest, usize) -> MockReply + Send + Sync;

/// Minimal HTTP/1.1 server answering each request through a script. The
/// handler gets the request and how many earlier requests named the same
/// model.
pub struct MockServer {
    port: u16,
    stop: Arc<AtomicBool>,
    log: Arc<Mutex<Vec<MockRequest>>>,
}

fn read_request(stream: &mut TcpStream) -> Option<MockRequest> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut headers = BTreeMap::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
    }
    let len: usize = headers
        .get("content-length")
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(MockRequest {
        path,
        headers,
        body: serde_json::from_slice(&body).unwrap_or(Value::Null),
    })
}

impl MockServer {
    pub fn start(
        handler: impl Fn(&MockRequest, usize) -> MockReply + Send + Sync + 'static,
    ) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let port = listener.local_addr().unwrap().port();
        let stop = Arc::new(AtomicBool::new(false));
        let log: Arc<Mutex<Vec<MockRequest>>> = Arc::default();
        let handler: Arc<Handler> = Arc::new(handler);
        let (stop2, log2) = (stop.clone(), log.clone());
        thread::spawn(move || {
            for stream in listener.incoming() {
                if stop2.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(mut stream) = stream else { continue };
                let (handler, log) = (handler.clone(), log2.clone());
                thread::spawn(move || {
                    let Some(req) = read_request(&mut stream) else {
                        return;
                    };
                    let nth = {
                        let mut l = log.lock().unwrap();
                        let n = l.iter().filter(|r| r.model() == req.model()).count();
                        l.push(req.clone());
                        n
                    };
                    let reply = handler(&req, nth);
                    thread::sleep(reply.delay);
                    let head = format!(
                        "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                        reply.status,
                        reply.body.len()
                    );
                    let _ = stream.write_all(head.as_bytes());
                    let _ = stream.write_all(reply.body.as_bytes());
                    let _ = stream.flush();
                });
            }
        });
        Self { port, stop, log }
    }

    pub fn base_url(&self) -> String {
        format!("http://127.0.0.1:{}/v1", self.port)
    }

    pub fn requests(&self) -> Vec<MockRequest> {
        self.log.lock().unwrap().clone()
    }

    pub fn count_for(&self, model: &str) -> usize {
        self.log
            .lock()
            .unwrap()
            .iter()
            .filter(|r| r.model() == model)
            .count()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(("127.0.0.1", self.port));
    }
}

/// Trajectory ids listed in a prompt's "Candidate trajectories shown" line.
pub fn prompt_ids(prompt: &str) -> Vec<u32> {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix("Candidate trajectories shown:"))
        .map(|rest| {
            rest.split(',')
                .filter_map(|t| t.trim().strip_prefix('T')?.parse().ok())
                .collect()
        })
        .unwrap_or_default()
}

pub fn scores_block(ids: &[u32], s: [u8; 4], view: u8) -> String {
    let mut out = String::from("```scores\n");
    for id in ids {
        out.push_str(&format!(
            "T{id}: safety={} task={} eff={} phys={}\n",
            s[0], s[1], s[2], s[3]
        ));
    }
    out.push_str(&format!(
        "view={view}\nsignals: transition=0 gripper=hold complete=0\n```"
    ));
    out
}

/// A step whose chosen trajectory (id 1) got `chosen` from every cell.
pub fn synthetic_step(
    t: u32,
    chosen: [u8; 4],
    outcome: ExecutionOutcome,
    signals: Signals,
) -> StepRecord {
    let mut tensor = ScoreTensor::new(vec!["a".into()], vec!["view1".into()], vec![1]);
    tensor.cells[0][0] = Some(CellScores {
        scores: BTreeMap::from([(1, SubScores::from_array(chosen))]),
        q_view: 8,
        signals,
    });
    StepRecord {
        step: t,
        subtask_index: 0,
        radius: 0.25,
        theta_deg: 90.0,
        sampling_attempts: 1,
        candidates: Vec::new(),
        feasible_ids: vec![1],
        template_version: 1,
        active_views: vec!["view1".into()],
        responses: Vec::new(),
        tensor: Some(tensor),
        view_stats: Vec::new(),
        scores: BTreeMap::from([(1, 8.0)]),
        chosen_id: Some(1),
        signals: Some(signals),
        gripper_event: None,
        subtask_advanced: false,
        spurious_completion: false,
        outcome: Some(outcome),
        evaluation_error: None,
    }
}

pub fn outcome(collided: Option<&str>, violations: Vec<ConstraintViolation>) -> ExecutionOutcome {
    ExecutionOutcome {
        reached_target_pose: true,
        collision_occurred: collided.is_some(),
        collided_ids: collided.map(|c| vec![c.to_string()]).unwrap_or_default(),
        subtask_objective_met: false,
        constraint_violations: violations,
        final_ee_pose: Pose::from_position(Vec3::new(0.0, 0.0, 0.3)),
    }
}

pub fn synthetic_record(steps: Vec<StepRecord>, success: bool) -> TaskRecord {
    TaskRecord {
        schema_version: MEMORY_SCHEMA_VERSION,
        config: TaskConfig::from_json(
            r#"{"task_description":"synthetic","subtasks":[{"goal_position":[0.2,0.0,0.3]}]}"#,
        )
        .unwrap(),
        template_version: 1,
        steps,
        success,
        failure_reason: if success {
            None
        } else {
            Some(FailureReason::FeasibleSetExhausted)
        },
        spurious_completions: 0,
        gripper_closes: 0,
        gripper_opens: 0,
        collisions: 0,
    }
}

/// Memory in which every failure is a collision while the chosen paths
/// were rated 9 for safety: `n` colliding steps in successful tasks.
pub fn collision_biased_records(n: usize) -> Vec<TaskRecord> {
    (0..n)
        .map(|_| {
            let steps = vec![
                synthetic_step(
                    0,
                    [9, 6, 6, 10],
                    outcome(Some("rock"), Vec::new()),
                    Signals::default(),
                ),
                synthetic_step(
                    1,
                    [9, 9, 9, 10],
                    ExecutionOutcome {
                        subtask_objective_met: true,
                        ..outcome(None, Vec::new())
                    },
                    Signals {
                        task_complete: true,
                        gripper: GripperCommand::Hold,
                        subtask_transition: false,
                    },
                ),
            ];
            synthetic_record(steps, true)
        })
        .collect()
}

/// Memory with only successful, clean steps.
pub fn clean_records(n: usize) -> Vec<TaskRecord> {
    (0..n)
        .map(|_| {
            let done = ExecutionOutcome {
                subtask_objective_met: true,
                ..outcome(None, Vec::new())
            };
            let signals = Signals {
                task_complete: true,
                ..Signals::default()
            };
            synthetic_record(vec![synthetic_step(0, [9, 9, 9, 9], done, signals)], true)
        })
        .collect()
}

/// Uniformly distributed rotation (Shoemake's subgroup algorithm).
pub fn random_rotation<R: rand::Rng>(rng: &mut R) -> vqa_mpc::geometry::UnitQuaternion {
    use std::f64::consts::TAU;
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    vqa_mpc::geometry::UnitQuaternion::normalize(
        b * (TAU * u3).cos(),
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
    )
    .unwrap()
}

pub fn random_shape<R: rand::Rng>(rng: &mut R, kind: usize) -> vqa_mpc::scene::ShapePrimitive {
    use vqa_mpc::scene::ShapePrimitive;
    match kind % 3 {
        0 => ShapePrimitive::Sphere {
            radius: rng.gen_range(0.02..0.1),
        },
        1 => ShapePrimitive::Box {
            half_extents: Vec3::new(
                rng.gen_range(0.01..0.1),
                rng.gen_range(0.01..0.1),
                rng.gen_range(0.01..0.1),
            ),
        },
        _ => ShapePrimitive::Cylinder {
            radius: rng.gen_range(0.01..0.08),
            height: rng.gen_range(0.02..0.2),
        },
    }
}

pub fn random_point<R: rand::Rng>(rng: &mut R, lo: Vec3, hi: Vec3) -> Vec3 {
    Vec3::new(
        rng.gen_range(lo.x..hi.x),
        rng.gen_range(lo.y..hi.y),
        rng.gen_range(lo.z..hi.z),
    )
}

/// Workspace `[-0.4, 0.4]² × [0, 0.5]` with 1 to 4 random objects, the
/// first of which is sometimes the target.
pub fn random_scene<R: rand::Rng>(rng: &mut R) -> vqa_mpc::scene::Scene {
    use vqa_mpc::scene::{Role, Scene, SceneObject, WorkspaceBounds};
    let lo = Vec3::new(-0.4, -0.4, 0.0);
    let hi = Vec3::new(0.4, 0.4, 0.5);
    let ws = WorkspaceBounds::new(lo, hi).unwrap();
    let ee = Pose::new(random_point(rng, lo, hi), random_rotation(rng));
    let mut scene = Scene::new(ws, ee).unwrap();
    let n = rng.gen_range(1..=4);
    for i in 0..n {
        let role = match (i, rng.gen_range(0..4)) {
            (0, 0) => Role::Target,
            (_, 1) => Role::Fixture,
            _ => Role::Obstacle,
        };
        let kind = rng.gen_range(0..3);
        let obj = SceneObject::new(
            format!("obj{i}"),
            random_shape(rng, kind),
            Pose::new(random_point(rng, lo, hi), random_rotation(rng)),
            role,
        );
        scene.add_object(obj).unwrap();
    }
    scene
}

/// Straight-line candidates from the end-effector to random workspace points.
pub fn random_candidates<R: rand::Rng>(
    scene: &vqa_mpc::scene::Scene,
    rng: &mut R,
    n: usize,
    epsilon: f64,
) -> vqa_mpc::trajectory::CandidateSet {
    use vqa_mpc::sampler::{generate_trajectory, required_horizon, OrientationLimits};
    let ws = scene.workspace();
    let start = scene.ee_pose();
    let trajectories = (0..n)
        .map(|i| {
            let target = random_point(rng, ws.min, ws.max);
            let h = required_horizon(start.position.distance(target), 12, epsilon);
            generate_trajectory(
                &start,
                scene.gripper(),
                target,
                h,
                i as u32 + 1,
                &OrientationLimits::default(),
            )
            .unwrap()
        })
        .collect();
    vqa_mpc::trajectory::CandidateSet {
        step: 0,
        trajectories,
    }
}
