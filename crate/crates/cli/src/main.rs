use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use vqa_mpc::evaluator::{
    build_agents, default_template, load_template, save_template, Agent, AgentsConfig, OracleAgent,
};
use vqa_mpc::mpc_loop::{refine, replay_trace, run_task, ExperienceMemory, RunOptions, TaskConfig};
use vqa_mpc::scene::load_scene;
use vqa_mpc::trajectory::FeasibleSet;
use vqa_mpc::views::{default_camera_ring, render_view, select_cameras, Intrinsics};

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_TASK_FAILED: u8 = 2;
const EXIT_REPLAY_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vqa-mpc",
    version,
    about = "Closed-loop VQA-scored trajectory planning"
)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one task and write its record and trace.
    Run(RunArgs),
    /// Derive the next template version from the experience memory.
    Refine(RefineArgs),
    /// Render debug views of a scene.
    Render(RenderArgs),
    /// Recompute logged decisions and check they match.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    task: PathBuf,
    /// template_vN.txt; the built-in v1 template when omitted.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Agents config; required unless --oracle-only.
    #[arg(long)]
    agents: Option<PathBuf>,
    #[arg(long, default_value = "trace")]
    trace_dir: PathBuf,
    /// Overrides the task config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Score with the built-in geometric oracle instead of remote agents.
    #[arg(long)]
    oracle_only: bool,
    /// Fixed active views, e.g. `v1,v4,v8`; disables adaptive selection.
    #[arg(long, value_delimiter = ',')]
    views: Option<Vec<String>>,
    /// Experience memory file; defaults to <trace-dir>/experience.ndjson.
    #[arg(long)]
    memory: Option<PathBuf>,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    memory: PathBuf,
    #[arg(long)]
    template: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Camera id (`view3` or `v3`) or `all`.
    #[arg(long, default_value = "all")]
    camera: String,
    #[arg(long, default_value = "views")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    trace_dir: PathBuf,
}

fn camera_id(s: &str) -> String {
    let s = s.trim();
    match s.strip_prefix('v') {
        Some(n) if !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) => format!("view{n}"),
        _ => s.to_string(),
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} file not found: {}", path.display());
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    require_file(&args.scene, "scene")?;
    require_file(&args.task, "task config")?;
    if let Some(t) = &args.template {
        require_file(t, "template")?;
    }
    if !args.oracle_only {
        match &args.agents {
            Some(a) => require_file(a, "agents config")?,
            None => bail!("--agents is required unless --oracle-only is given"),
        }
    }

    let mut scene =
        load_scene(&args.scene).with_context(|| format!("loading {}", args.scene.display()))?;
    let mut cfg =
        TaskConfig::load(&args.task).with_context(|| format!("loading {}", args.task.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let tpl = match &args.template {
        Some(p) => load_template(p).with_context(|| format!("loading {}", p.display()))?,
        None => default_template(),
    };
    let (agents, parallelism): (Vec<Arc<dyn Agent>>, usize) = if args.oracle_only {
        (vec![Arc::new(OracleAgent::default())], 1)
    } else {
        let path = args.agents.as_ref().expect("checked above");
        let ac = AgentsConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
        (build_agents(&ac)?, ac.parallelism)
    };

    fs::create_dir_all(&args.trace_dir)
        .with_context(|| format!("creating trace dir {}", args.trace_dir.display()))?;
    let opts = RunOptions {
        fixed_views: args.views.map(|v| v.iter().map(|s| camera_id(s)).collect()),
        parallelism,
        trace_dir: Some(args.trace_dir.clone()),
    };
    let record = run_task(&mut scene, &cfg, &tpl, &agents, &opts)?;

    let record_path = args.trace_dir.join("task_record.json");
    fs::write(&record_path, serde_json::to_string_pretty(&record)?)
        .with_context(|| format!("writing {}", record_path.display()))?;
    let memory = ExperienceMemory::new(
        args.memory
            .unwrap_or_else(|| args.trace_dir.join("experience.ndjson")),
    );
    if let Err(e) = memory.append(&record) {
        log::warn!("experience memory not updated: {e}");
    }

    let steps = record.steps.len();
    if record.success {
        println!("success after {steps} steps");
        Ok(EXIT_OK)
    } else {
        let reason = record
            .failure_reason
            .map(|r| serde_json::to_string(&r).unwrap_or_default())
            .unwrap_or_default();
        println!(
            "task failed after {steps} steps: {}",
            reason.trim_matches('"')
        );
        Ok(EXIT_TASK_FAILED)
    }
}

fn cmd_refine(args: RefineArgs) -> Result<u8> {
    require_file(&args.memory, "memory")?;
    let tpl = load_template(&args.template)
        .with_context(|| format!("loading {}", args.template.display()))?;
    let contents = ExperienceMemory::new(&args.memory).load()?;
    if !contents.skipped.is_empty() {
        eprintln!(
            "warning: skipped {} malformed memory line(s)",
            contents.skipped.len()
        );
    }
    if contents.records.is_empty() {
        println!("memory holds no task records; template unchanged");
        return Ok(EXIT_OK);
    }
    let (report, next) = refine(&contents.records, &tpl, None)?;
    println!("analyzed {} task record(s)", report.records_analyzed);
    for d in &report.discrepancies {
        let mean = d
            .mean_chosen_score
            .map_or("n/a".to_string(), |m| format!("{m:.2}"));
        println!(
            "  {:<11} failure steps {:>4}  mean chosen score {:>5}{}",
            d.key.as_str(),
            d.failure_steps,
            mean,
            if d.biased { "  BIASED" } else { "" }
        );
    }
    for p in &report.failure_patterns {
        println!("  pattern: {p}");
    }
    if next == tpl {
        println!("no biased sub-question; template unchanged");
        return Ok(EXIT_OK);
    }
    let dir = args
        .template
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let (txt, weights) = save_template(dir, &next)?;
    println!("wrote {} and {}", txt.display(), weights.display());
    Ok(EXIT_OK)
}

fn cmd_render(args: RenderArgs) -> Result<u8> {
    require_file(&args.scene, "scene")?;
    let scene =
        load_scene(&args.scene).with_context(|| format!("loading {}", args.scene.display()))?;
    let ring = default_camera_ring(scene.workspace(), Intrinsics::default())?;
    let ids: Vec<String> = if args.camera == "all" {
        ring.iter().map(|c| c.id.clone()).collect()
    } else {
        vec![camera_id(&args.camera)]
    };
    let cams = select_cameras(&ring, &ids)?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let empty = FeasibleSet {
        step: 0,
        trajectories: Vec::new(),
    };
    for cam in cams {
        let (img, _) = render_view(&scene, &empty, cam);
        let path = args.out_dir.join(format!("{}.ppm", cam.id));
        fs::write(&path, img.canvas.to_ppm())
            .with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(EXIT_OK)
}

fn cmd_replay(args: ReplayArgs) -> Result<u8> {
    let report = replay_trace(&args.trace_dir)?;
    match report.mismatches.first() {
        None => {
            println!(
                "{} step(s) replayed, all decisions match",
                report.steps_checked
            );
            Ok(EXIT_OK)
        }
        Some(m) => {
            println!(
                "decision mismatch at step {}: {} ({} of {} step(s) differ)",
                m.step,
                m.reason,
                report.mismatches.len(),
                report.steps_checked
            );
            Ok(EXIT_REPLAY_MISMATCH)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Refine(a) => cmd_refine(a),
        Command::Render(a) => cmd_render(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
