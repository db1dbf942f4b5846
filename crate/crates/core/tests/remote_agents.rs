mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{fixture, prompt_ids, scores_block, MockReply, MockServer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vqa_mpc::evaluator::{
    build_agents, default_template, evaluate_ensemble, instantiate_prompt, Agent, AgentConfig,
    AgentError, AgentKind, AgentsConfig, EvalContext, EvalRequest, RemoteAgent, ViewInput, Weights,
};
use vqa_mpc::fusion::{decide, FusionParams};
use vqa_mpc::sampler::{filter_constraints, sample_candidates, AnnealState, SamplerParams};
use vqa_mpc::scene::{load_scene, Scene};
use vqa_mpc::trajectory::FeasibleSet;
use vqa_mpc::views::{
    default_camera_ring, render_view, Camera, Intrinsics, ViewDescriptor, ViewImage,
};

struct Step {
    scene: Scene,
    feasible: FeasibleSet,
    cameras: Vec<Camera>,
    rendered: Vec<(ViewImage, ViewDescriptor)>,
    prompts: Vec<String>,
}

fn step() -> Step {
    let scene = load_scene(fixture("scenes/pick_place.json")).unwrap();
    let params = SamplerParams {
        n_candidates: 6,
        ..SamplerParams::default()
    };
    let anneal = AnnealState::new(params.anneal).unwrap();
    let cands = sample_candidates(
        &scene,
        &anneal,
        &params.new_bias(),
        &params,
        0,
        &mut ChaCha8Rng::seed_from_u64(5),
    )
    .unwrap();
    let feasible = filter_constraints(&cands, &scene, params.epsilon, Some("ball")).unwrap();
    assert!(!feasible.is_empty());
    let cameras: Vec<Camera> = default_camera_ring(scene.workspace(), Intrinsics::default())
        .unwrap()
        .into_iter()
        .take(3)
        .collect();
    let rendered = cameras
        .iter()
        .map(|c| render_view(&scene, &feasible, c))
        .collect();
    let prompts = cameras
        .iter()
        .map(|c| {
            instantiate_prompt(
                &default_template(),
                "pick the ball",
                0,
                &feasible.ids(),
                &c.id,
            )
            .unwrap()
        })
        .collect();
    Step {
        scene,
        feasible,
        cameras,
        rendered,
        prompts,
    }
}

impl Step {
    fn ctx(&self) -> EvalContext<'_> {
        EvalContext {
            scene: &self.scene,
            feasible: &self.feasible,
            goal: self.scene.object("ball").unwrap().pose.position,
            target_id: Some("ball"),
            epsilon: 0.01,
            weights: Weights::default(),
            required_gripper: None,
            is_last_subtask: false,
        }
    }

    fn inputs(&self) -> Vec<ViewInput<'_>> {
        (0..self.cameras.len())
            .map(|i| ViewInput {
                camera: &self.cameras[i],
                image: &self.rendered[i].0,
                descriptor: &self.rendered[i].1,
                prompt: &self.prompts[i],
            })
            .collect()
    }
}

fn agent_cfg(server: &MockServer, model: &str) -> AgentConfig {
    AgentConfig {
        name: model.to_string(),
        kind: AgentKind::Remote,
        base_url: Some(server.base_url()),
        model: Some(model.to_string()),
        api_key_env: None,
        timeout_secs: 2.0,
        max_attempts: 3,
        backoff_base_secs: 0.01,
    }
}

fn respond_once(agent: &RemoteAgent, s: &Step) -> Result<String, AgentError> {
    let ctx = s.ctx();
    agent.respond(&EvalRequest {
        prompt: &s.prompts[0],
        camera: &s.cameras[0],
        image: &s.rendered[0].0,
        descriptor: &s.rendered[0].1,
        context: &ctx,
    })
}

fn echo_scores(req: &common::MockRequest, _: usize) -> MockReply {
    MockReply::ok_content(&format!(
        "Here you go.\n{}",
        scores_block(&prompt_ids(req.prompt()), [7, 6, 5, 9], 8)
    ))
}

#[test]
fn valid_reply_is_responsive() {
    let server = MockServer::start(echo_scores);
    let s = step();
    let agents = build_agents(&AgentsConfig {
        parallelism: 2,
        agents: vec![agent_cfg(&server, "m1")],
    })
    .unwrap();
    let res = evaluate_ensemble(&agents, &s.inputs(), &s.ctx(), 2).unwrap();
    assert!(res.responses.iter().all(|r| r.responsive));
    let cell = res.tensor.cell(0, 0).unwrap();
    assert_eq!(cell.q_view, 8);
    assert_eq!(cell.scores.len(), s.feasible.len());

    let req = &server.requests()[0];
    assert_eq!(req.path, "/v1/chat/completions");
    assert!(!req.headers.contains_key("authorization"));
    let url = req.body["messages"][0]["content"][1]["image_url"]["url"]
        .as_str()
        .unwrap();
    assert!(url.starts_with("data:image/png;base64,"));
    assert!(req.prompt().contains("Camera: view"));
}

#[test]
fn api_key_comes_from_named_env_var() {
    let server = MockServer::start(echo_scores);
    std::env::set_var("VQA_MPC_TEST_KEY_A", "sekrit");
    let mut cfg = agent_cfg(&server, "keyed");
    cfg.api_key_env = Some("VQA_MPC_TEST_KEY_A".into());
    let agent = RemoteAgent::from_config(&cfg).unwrap();
    respond_once(&agent, &step()).unwrap();
    assert_eq!(
        server.requests()[0].headers["authorization"],
        "Bearer sekrit"
    );

    cfg.api_key_env = Some("VQA_MPC_TEST_KEY_UNSET".into());
    assert!(RemoteAgent::from_config(&cfg).is_err());
}

#[test]
fn server_errors_retry_then_give_up() {
    let server = MockServer::start(|_, _| MockReply::status(500));
    let agent = RemoteAgent::from_config(&agent_cfg(&server, "down")).unwrap();
    let err = respond_once(&agent, &step()).unwrap_err();
    assert!(
        matches!(err, AgentError::Exhausted { attempts: 3, .. }),
        "{err}"
    );
    assert_eq!(server.count_for("down"), 3);
}

#[test]
fn transient_errors_recover() {
    let server = MockServer::start(|req, nth| match nth {
        0 => MockReply::status(503),
        1 => MockReply::status(429),
        _ => echo_scores(req, nth),
    });
    let agent = RemoteAgent::from_config(&agent_cfg(&server, "flaky")).unwrap();
    let text = respond_once(&agent, &step()).unwrap();
    assert!(text.contains("```scores"));
    assert_eq!(server.count_for("flaky"), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(|_, _| MockReply::status(401));
    let agent = RemoteAgent::from_config(&agent_cfg(&server, "denied")).unwrap();
    assert!(matches!(
        respond_once(&agent, &step()),
        Err(AgentError::Status(401))
    ));
    assert_eq!(server.count_for("denied"), 1);
}

#[test]
fn slow_replies_time_out_and_retry() {
    // A reply slower than the timeout counts as a failed attempt.
    let server =
        MockServer::start(|req, nth| echo_scores(req, nth).delayed(Duration::from_millis(800)));
    let mut cfg = agent_cfg(&server, "slow");
    cfg.timeout_secs = 0.2;
    let agent = RemoteAgent::from_config(&cfg).unwrap();
    let t0 = Instant::now();
    let err = respond_once(&agent, &step()).unwrap_err();
    assert!(
        matches!(err, AgentError::Exhausted { attempts: 3, .. }),
        "{err}"
    );
    assert_eq!(server.count_for("slow"), 3);
    assert!(t0.elapsed() < Duration::from_secs(3));
}

#[test]
fn malformed_blocks_degrade_to_non_responsive() {
    let server = MockServer::start(|req, nth| match req.model() {
        "two_blocks" => {
            let b = scores_block(&prompt_ids(req.prompt()), [5, 5, 5, 5], 5);
            MockReply::ok_content(&format!("{b}\n{b}"))
        }
        "no_block" => MockReply::ok_content("I think trajectory 3 looks best."),
        "bad_id" => MockReply::ok_content(&scores_block(&[999], [5, 5, 5, 5], 5)),
        "out_of_range" => {
            MockReply::ok_content(&scores_block(&prompt_ids(req.prompt()), [11, 5, 5, 5], 5))
        }
        _ => echo_scores(req, nth),
    });
    let s = step();
    let models = ["good", "two_blocks", "no_block", "bad_id", "out_of_range"];
    let agents = build_agents(&AgentsConfig {
        parallelism: 6,
        agents: models.iter().map(|m| agent_cfg(&server, m)).collect(),
    })
    .unwrap();
    let res = evaluate_ensemble(&agents, &s.inputs(), &s.ctx(), 6).unwrap();
    for (m, model) in models.iter().enumerate() {
        for v in 0..3 {
            assert_eq!(
                res.tensor.is_responsive(m, v),
                *model == "good",
                "{model} view {v}"
            );
        }
    }
    let d = decide(&res.tensor, &Weights::default(), &FusionParams::default()).unwrap();
    assert!(d.view_stats.iter().all(|v| v.responsive_agents == 1));
}

#[test]
fn scripted_scores_fill_the_tensor() {
    let script = |model: &str| -> [u8; 4] {
        let k = model.trim_start_matches('m').parse::<u8>().unwrap();
        [k, k + 1, k + 2, k + 3]
    };
    let server = MockServer::start(move |req, _| {
        let s = script(req.model());
        MockReply::ok_content(&scores_block(&prompt_ids(req.prompt()), s, s[0]))
    });
    let s = step();
    let models = ["m1", "m2", "m3", "m4", "m5"];
    let agents = build_agents(&AgentsConfig {
        parallelism: 6,
        agents: models.iter().map(|m| agent_cfg(&server, m)).collect(),
    })
    .unwrap();
    let res = evaluate_ensemble(&agents, &s.inputs(), &s.ctx(), 6).unwrap();
    assert_eq!(res.tensor.shape(), (5, 3, s.feasible.len(), 4));
    for (m, model) in models.iter().enumerate() {
        for v in 0..3 {
            let cell = res.tensor.cell(m, v).unwrap();
            assert_eq!(cell.q_view, script(model)[0]);
            assert!(cell
                .scores
                .values()
                .all(|sc| sc.as_array() == script(model)));
        }
    }
}

#[test]
fn all_agents_down_is_evaluation_unavailable() {
    let server = MockServer::start(|_, _| MockReply::status(502));
    let s = step();
    let agents: Vec<Arc<dyn Agent>> = build_agents(&AgentsConfig {
        parallelism: 4,
        agents: vec![agent_cfg(&server, "x"), agent_cfg(&server, "y")],
    })
    .unwrap();
    let err = evaluate_ensemble(&agents, &s.inputs(), &s.ctx(), 4).unwrap_err();
    assert!(err.to_string().contains("no agent produced"), "{err}");
}

#[test]
fn agents_config_file_parses() {
    let cfg = AgentsConfig::load(fixture("agents/ensemble.json")).unwrap();
    let models: Vec<&str> = cfg
        .agents
        .iter()
        .filter_map(|a| a.model.as_deref())
        .collect();
    assert_eq!(
        models,
        [
            "SenseNova-V6-Pro",
            "Gemini-2.5-Pro",
            "Step-1o",
            "GLM-4v-Plus-20250111",
            "HunYuan-Standard-Vision"
        ]
    );
    assert!(cfg.agents.iter().all(|a| a.api_key_env.is_some()));
    let err =
        AgentsConfig::from_json(r#"{"agents":[{"name":"a","timeout_secs":"x"}]}"#).unwrap_err();
    assert!(err.to_string().contains("agents[0].timeout_secs"), "{err}");
}
