//! `duet`: batch front end for retargeting, graph extraction, metrics,
//! reward scoring and phase-sync simulation.
//!
//! Exit codes: 0 ok, 2 usage, 3 config or parse, 4 solver, 5 I/O.

mod config;
mod error;
mod inputs;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use duet_core::fixtures;
use duet_core::interaction_mesh;
use duet_core::metrics::{self, evaluate_trajectory};
use duet_core::motion_io::{build_manifolds, read_trajectory, trajectory_to_json, TrajectoryIoError};
use duet_core::phase_sync::{self, ChannelModel, SyncAgent, SyncConfig};
use duet_core::retarget::{nominal_robot_height, retarget_clip, RobotTrajectory, SolverError};
use duet_core::rewards::{r_contact, r_inter, InteractionSample};
use duet_core::robot_model::RobotModel;
use rayon::prelude::*;
use serde::Serialize;

use config::FileConfig;
use error::CliError;
use inputs::{create_dir, load_robots, write_atomic, ClipSource};

#[derive(Parser)]
#[command(name = "duet", version, about = "Interaction-aware two-robot motion retargeting")]
struct Cli {
    /// TOML config; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Retarget two-person clips onto two robots.
    Retarget(RetargetArgs),
    /// Extract interaction (and optionally contact) graphs from a clip.
    Graphs(GraphsArgs),
    /// Evaluate a retargeted trajectory.
    Metrics(MetricsArgs),
    /// Score interaction reward samples or a trajectory.
    Rewards(RewardsArgs),
    /// Simulate two-agent phase synchronization.
    Sync(SyncArgs),
    /// Write the bundled clips and robot spec to disk.
    Fixtures(FixturesArgs),
}

#[derive(Args, Clone)]
struct ClipArgs {
    /// Bundled fixture name (handshake, hug) or keypoint text file; repeatable.
    #[arg(long = "clip")]
    clips: Vec<String>,
    /// Two BVH files, one per performer, forming a single clip.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    bvh: Option<Vec<PathBuf>>,
}

impl ClipArgs {
    fn sources(&self) -> Result<Vec<ClipSource>, CliError> {
        let mut out: Vec<ClipSource> = self.clips.iter().map(|c| ClipSource::parse(c)).collect();
        if let Some(paths) = &self.bvh {
            out.push(ClipSource::Bvh([paths[0].clone(), paths[1].clone()]));
        }
        if out.is_empty() {
            return Err(CliError::Usage("no input clip: pass --clip or --bvh".into()));
        }
        Ok(out)
    }
}

#[derive(Args, Clone)]
struct RobotArgs {
    /// Robot spec JSON (defaults to the bundled G1-like robot).
    #[arg(long)]
    robot: Option<PathBuf>,
    /// Robot spec for the second agent (defaults to --robot).
    #[arg(long)]
    robot_b: Option<PathBuf>,
}

impl RobotArgs {
    fn apply(&self, cfg: &mut FileConfig) {
        if self.robot.is_some() {
            cfg.robot = self.robot.clone();
        }
        if self.robot_b.is_some() {
            cfg.robot_b = self.robot_b.clone();
        }
    }
}

#[derive(Args)]
struct RetargetArgs {
    #[command(flatten)]
    clips: ClipArgs,
    #[command(flatten)]
    robots: RobotArgs,
    /// Output directory; each clip gets a subdirectory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    w_self: Option<f64>,
    #[arg(long)]
    w_inter: Option<f64>,
    #[arg(long)]
    w_reg: Option<f64>,
    /// Per-iteration step bound (rad or m per tangent component).
    #[arg(long)]
    trust_region: Option<f64>,
    #[arg(long)]
    sqp_iters: Option<usize>,
    /// Drop the non-penetration constraints.
    #[arg(long)]
    no_collision: bool,
    #[arg(long)]
    self_collision: bool,
    /// Validate inputs and print the plan without computing or writing.
    #[arg(long)]
    dry_run: bool,
    /// Clips solved in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct GraphsArgs {
    #[command(flatten)]
    clips: ClipArgs,
    #[command(flatten)]
    robots: RobotArgs,
    #[arg(long)]
    out: PathBuf,
    /// Retargeted trajectory of the (single) clip, to add the contact graph.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    trajectory: PathBuf,
    /// Graph priors written by `retarget`.
    #[arg(long)]
    priors: PathBuf,
    /// Rollout trajectories scored against the contact graph; repeatable.
    #[arg(long = "rollout")]
    rollouts: Vec<PathBuf>,
    #[command(flatten)]
    robots: RobotArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct RewardsArgs {
    /// JSON array of interaction samples.
    #[arg(long, conflicts_with_all = ["trajectory", "priors"])]
    samples: Option<PathBuf>,
    /// Score the interaction term of a trajectory against its priors.
    #[arg(long, requires = "priors")]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    priors: Option<PathBuf>,
    #[command(flatten)]
    robots: RobotArgs,
    /// Output table (whitespace-delimited).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SyncArgs {
    #[arg(long)]
    gain: Option<f64>,
    /// Clock drift of agent 0; agent 1 drifts the opposite way.
    #[arg(long, allow_negative_numbers = true)]
    drift: Option<f64>,
    #[arg(long)]
    delay_lo_ms: Option<f64>,
    #[arg(long)]
    delay_hi_ms: Option<f64>,
    #[arg(long)]
    drop: Option<f64>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Only agent 0 applies the correction.
    #[arg(long)]
    asymmetric: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FixturesArgs {
    #[arg(long)]
    out: PathBuf,
}

// Stdout writes ignore errors so that piping into `head` does not panic.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = FileConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Retarget(a) => cmd_retarget(a, &mut cfg),
        Command::Graphs(a) => cmd_graphs(a, &mut cfg),
        Command::Metrics(a) => cmd_metrics(a, &mut cfg),
        Command::Rewards(a) => cmd_rewards(a, &mut cfg),
        Command::Sync(a) => cmd_sync(a, &mut cfg),
        Command::Fixtures(a) => cmd_fixtures(a),
    }
}

fn solver_error(e: SolverError) -> CliError {
    match e {
        SolverError::Qp { .. } => CliError::Solver(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn trajectory_error(path: &Path, e: TrajectoryIoError) -> CliError {
    match e {
        TrajectoryIoError::Io { source, .. } => CliError::io(path, source),
        other => CliError::config(path, other),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Validated inputs of a run, printed by `--dry-run`.
#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    inputs: Vec<ClipSource>,
    robots: [String; 2],
    config: Option<PathBuf>,
    out: Vec<PathBuf>,
    solver_config_hash: Option<String>,
}

fn h_robot(cfg: &FileConfig, model: &RobotModel) -> Result<f64, CliError> {
    match cfg.solver.h_robot {
        Some(h) => Ok(h),
        None => nominal_robot_height(model, &cfg.solver.height_estimator).map_err(solver_error),
    }
}

fn cmd_retarget(a: RetargetArgs, cfg: &mut FileConfig) -> Result<(), CliError> {
    a.robots.apply(cfg);
    let solver = &mut cfg.solver;
    for (slot, v) in [
        (&mut solver.w_self, a.w_self),
        (&mut solver.w_inter, a.w_inter),
        (&mut solver.w_reg, a.w_reg),
        (&mut solver.trust_region, a.trust_region),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if let Some(n) = a.sqp_iters {
        solver.sqp_iters_per_frame = n;
    }
    if a.no_collision {
        solver.collision = false;
    }
    if a.self_collision {
        solver.self_collision = true;
    }
    cfg.solver.validate().map_err(solver_error)?;
    if a.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let sources = a.clips.sources()?;
    // Parse everything before any compute starts.
    let robots = load_robots(cfg)?;
    let clips = sources
        .iter()
        .map(|s| s.load(&cfg.bvh))
        .collect::<Result<Vec<_>, _>>()?;
    let dirs: Vec<PathBuf> = sources.iter().map(|s| a.out.join(s.label())).collect();
    if a.dry_run {
        let manifest = RunManifest {
            command: "retarget",
            inputs: sources.clone(),
            robots: [robots[0].name().to_string(), robots[1].name().to_string()],
            config: cfg.source.clone(),
            out: dirs,
            solver_config_hash: Some(cfg.solver.hash()),
        };
        out!("{}", to_json(&manifest));
        for (s, c) in sources.iter().zip(&clips) {
            outln!("{}: {} frames, {} keypoints", s.label(), c.num_frames(), c.names.len());
        }
        return Ok(());
    }
    for dir in &dirs {
        create_dir(dir)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let models = [&robots[0], &robots[1]];
    let results: Vec<_> = pool.install(|| {
        clips
            .par_iter()
            .map(|clip| {
                let start = Instant::now();
                let r = retarget_clip(clip, models, &cfg.mesh, &cfg.solver);
                (r, start.elapsed().as_secs_f64())
            })
            .collect()
    });
    let mut failures = Vec::new();
    for ((source, dir), (result, secs)) in sources.iter().zip(&dirs).zip(results) {
        let (_, traj) = result.map_err(solver_error)?;
        write_outputs(dir, &traj)?;
        let depth = traj.diagnostics.iter().map(|d| d.penetration_depth).fold(0.0, f64::max);
        let failed = traj.failed_frames();
        outln!(
            "{}: {} frames in {secs:.1} s, {} failed, max penetration {:.2} cm -> {}",
            source.label(),
            traj.frames.len(),
            failed.len(),
            100.0 * depth,
            dir.display()
        );
        if !failed.is_empty() {
            failures.push(format!("{}: frames {failed:?}", source.label()));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Solver(format!("solver failed on {}", failures.join("; "))))
    }
}

fn write_outputs(dir: &Path, traj: &RobotTrajectory) -> Result<(), CliError> {
    let traj_path = dir.join("trajectory.json");
    let text = trajectory_to_json(traj).map_err(|e| trajectory_error(&traj_path, e))?;
    write_atomic(&traj_path, text.as_bytes())?;
    write_atomic(&dir.join("priors.json"), traj.priors.to_json().as_bytes())?;
    write_atomic(&dir.join("diagnostics.json"), to_json(&traj.diagnostics).as_bytes())?;
    Ok(())
}

fn load_trajectory(path: &Path, robots: &[RobotModel; 2]) -> Result<RobotTrajectory, CliError> {
    let traj = read_trajectory(path).map_err(|e| trajectory_error(path, e))?;
    for (agent, model) in robots.iter().enumerate() {
        if traj.robot_models[agent] != model.name() {
            return Err(CliError::config(
                path,
                format!("agent {agent} was retargeted onto `{}`, not `{}`", traj.robot_models[agent], model.name()),
            ));
        }
        if let Some(c) = traj.frames.iter().flatten().find(|c| c.q.len() != model.dof()) {
            return Err(CliError::config(path, format!("{} joint values for a {}-DoF robot", c.q.len(), model.dof())));
        }
    }
    Ok(traj)
}

fn load_priors(path: &Path) -> Result<interaction_mesh::GraphPriors, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    interaction_mesh::GraphPriors::from_json(&text).map_err(|e| CliError::config(path, e))
}

fn cmd_graphs(a: GraphsArgs, cfg: &mut FileConfig) -> Result<(), CliError> {
    a.robots.apply(cfg);
    let sources = a.clips.sources()?;
    if a.trajectory.is_some() && sources.len() != 1 {
        return Err(CliError::Usage("--trajectory needs exactly one clip".into()));
    }
    let robots = load_robots(cfg)?;
    let clips = sources
        .iter()
        .map(|s| s.load(&cfg.bvh))
        .collect::<Result<Vec<_>, _>>()?;
    let traj = a.trajectory.as_deref().map(|p| load_trajectory(p, &robots)).transpose()?;
    let dirs: Vec<PathBuf> = sources.iter().map(|s| a.out.join(s.label())).collect();
    if a.dry_run {
        let manifest = RunManifest {
            command: "graphs",
            inputs: sources,
            robots: [robots[0].name().to_string(), robots[1].name().to_string()],
            config: cfg.source.clone(),
            out: dirs,
            solver_config_hash: None,
        };
        out!("{}", to_json(&manifest));
        return Ok(());
    }
    let h = h_robot(cfg, &robots[0])?;
    for ((source, clip), dir) in sources.iter().zip(&clips).zip(&dirs) {
        let reference =
            build_manifolds(clip, h, &cfg.solver.height_estimator).map_err(|e| CliError::Config(e.to_string()))?;
        let robot_frames = traj.as_ref().map(|t| ([&robots[0], &robots[1]], t.frames.as_slice()));
        if let Some((_, frames)) = robot_frames {
            if frames.len() != reference.num_frames() {
                return Err(CliError::Config(format!(
                    "trajectory has {} frames, clip has {}",
                    frames.len(),
                    reference.num_frames()
                )));
            }
        }
        let priors = interaction_mesh::extract_priors(&reference, &cfg.mesh, robot_frames)
            .map_err(|e| CliError::Config(e.to_string()))?;
        create_dir(dir)?;
        write_atomic(&dir.join("priors.json"), priors.to_json().as_bytes())?;
        let edges: usize = priors.interaction_frames.iter().map(Vec::len).sum();
        outln!(
            "{}: {} frames, {:.2} interaction edges per frame -> {}",
            source.label(),
            reference.num_frames(),
            edges as f64 / reference.num_frames() as f64,
            dir.display()
        );
    }
    Ok(())
}

fn cmd_metrics(a: MetricsArgs, cfg: &mut FileConfig) -> Result<(), CliError> {
    a.robots.apply(cfg);
    let robots = load_robots(cfg)?;
    let traj = load_trajectory(&a.trajectory, &robots)?;
    let priors = load_priors(&a.priors)?;
    let rollouts = a
        .rollouts
        .iter()
        .map(|p| load_trajectory(p, &robots).map(|t| t.frames))
        .collect::<Result<Vec<_>, _>>()?;
    for (what, n) in [("priors", priors.interaction_frames.len()), ("contact graph", priors.contact_frames.len())]
        .into_iter()
        .chain(rollouts.iter().map(|r| ("rollout", r.len())))
    {
        if n != traj.frames.len() {
            return Err(CliError::Config(format!(
                "{what} has {n} frames, trajectory has {}",
                traj.frames.len()
            )));
        }
    }
    if a.dry_run {
        let manifest = RunManifest {
            command: "metrics",
            inputs: Vec::new(),
            robots: [robots[0].name().to_string(), robots[1].name().to_string()],
            config: cfg.source.clone(),
            out: vec![a.out.join("metrics.json"), a.out.join("metrics.txt"), a.out.join("traces.tsv")],
            solver_config_hash: Some(traj.solver_config_hash.clone()),
        };
        out!("{}", to_json(&manifest));
        return Ok(());
    }
    let h = h_robot(cfg, &robots[0])?;
    let report = evaluate_trajectory(
        [&robots[0], &robots[1]],
        &traj.frames,
        &priors,
        h,
        &rollouts,
        cfg.mesh.contact_threshold,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    create_dir(&a.out)?;
    write_atomic(&a.out.join("metrics.json"), report.to_json().as_bytes())?;
    let table = report.to_table();
    write_atomic(&a.out.join("metrics.txt"), table.as_bytes())?;
    write_atomic(&a.out.join("traces.tsv"), report.traces_text().as_bytes())?;
    out!("{table}");
    Ok(())
}

fn cmd_rewards(a: RewardsArgs, cfg: &mut FileConfig) -> Result<(), CliError> {
    a.robots.apply(cfg);
    cfg.rewards.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut out = String::new();
    let mut total = 0.0;
    let mut count = 0usize;
    if let Some(path) = &a.samples {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let samples: Vec<InteractionSample> = serde_json::from_str(&text).map_err(|e| CliError::config(path, e))?;
        out.push_str("# sample r_inter r_contact\n");
        for (i, s) in samples.iter().enumerate() {
            let ri = r_inter(s, &cfg.rewards).map_err(|e| CliError::config(path, format!("sample {i}: {e}")))?;
            let rc = r_contact(s, &cfg.rewards).map_err(|e| CliError::config(path, format!("sample {i}: {e}")))?;
            let _ = writeln!(out, "{i} {ri:.12} {rc:.12}");
            total += ri;
            count += 1;
        }
    } else if let (Some(tp), Some(pp)) = (&a.trajectory, &a.priors) {
        let robots = load_robots(cfg)?;
        let traj = load_trajectory(tp, &robots)?;
        let priors = load_priors(pp)?;
        let frames = metrics::edge_frames([&robots[0], &robots[1]], &traj.frames, &priors)
            .map_err(|e| CliError::Config(e.to_string()))?;
        out.push_str("# frame r_inter edges\n");
        for (t, f) in frames.iter().enumerate() {
            let s = InteractionSample {
                d_sim: f.sim.clone(),
                d_ref: f.reference.clone(),
                weights: f.weights.clone(),
                ..InteractionSample::default()
            };
            let ri = r_inter(&s, &cfg.rewards).map_err(|e| CliError::Config(e.to_string()))?;
            let _ = writeln!(out, "{t} {ri:.12} {}", f.reference.len());
            total += ri;
            count += 1;
        }
    } else {
        return Err(CliError::Usage("pass --samples, or --trajectory with --priors".into()));
    }
    write_atomic(&a.out, out.as_bytes())?;
    let mean = if count == 0 { 0.0 } else { total / count as f64 };
    outln!("{count} rows, mean r_inter {mean:.6} -> {}", a.out.display());
    Ok(())
}

fn cmd_sync(a: SyncArgs, cfg: &mut FileConfig) -> Result<(), CliError> {
    let s = &mut cfg.sync;
    for (slot, v) in [
        (&mut s.gain, a.gain),
        (&mut s.drift, a.drift),
        (&mut s.delay_lo_ms, a.delay_lo_ms),
        (&mut s.delay_hi_ms, a.delay_hi_ms),
        (&mut s.drop_probability, a.drop),
        (&mut s.duration, a.duration),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    if a.asymmetric {
        s.symmetric = false;
    }
    let s = cfg.sync.clone();
    outln!("seed: {}", s.seed);
    let agents = [SyncAgent::new(0.0, s.drift, s.gain), SyncAgent::new(0.0, -s.drift, s.gain)];
    let channel = ChannelModel {
        delay_lo: s.delay_lo_ms / 1000.0,
        delay_hi: s.delay_hi_ms / 1000.0,
        drop_probability: s.drop_probability,
        seed: s.seed,
    };
    let config = SyncConfig {
        dt: phase_sync::DEFAULT_DT,
        duration: s.duration,
        symmetric: s.symmetric,
    };
    let trace = phase_sync::simulate(agents, &channel, &config).map_err(|e| CliError::Usage(e.to_string()))?;
    write_atomic(&a.out, trace.to_text().as_bytes())?;
    let last = trace.error.last().map_or(0.0, |e| e.abs());
    let window = (s.duration * 0.1).max(config.dt);
    if s.gain == 0.0 {
        let rate = if s.duration > 0.0 { last / s.duration } else { 0.0 };
        outln!("open loop: |error| grows linearly at {rate:.3e} per second, {last:.6} after {:.1} s", s.duration);
    } else {
        outln!(
            "steady-state |error| {:.6} (last {window:.1} s), max {:.6}, final {last:.6}",
            trace.steady_state_error(window),
            trace.max_abs_error()
        );
    }
    Ok(())
}

fn cmd_fixtures(a: FixturesArgs) -> Result<(), CliError> {
    create_dir(&a.out)?;
    for name in fixtures::CLIP_NAMES {
        let clip = fixtures::clip_by_name(name).expect("bundled clip");
        write_atomic(&a.out.join(format!("{name}.kp")), clip.to_keypoint_text().as_bytes())?;
    }
    write_atomic(&a.out.join("g1_like.json"), fixtures::g1_like_spec().to_json().as_bytes())?;
    outln!("wrote {} clips and the robot spec to {}", fixtures::CLIP_NAMES.len(), a.out.display());
    Ok(())
}
