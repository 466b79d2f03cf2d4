//! Command-line surface: `plan`, `sweep`, `track`, `validate`, `render`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use headland_core::field::{parse_scenario, validate_map, Scenario, TurnDoc};
use headland_core::geometry::Pose2D;
use headland_core::optimizer::{certify_solution, CertificateReport, OptimizerConfig, SolveOutcome};
use headland_core::pattern::TurnPattern;
use headland_core::pipeline::{classic_rows, plan_rows, CoarseSource, PlanStatus, PlannerConfig};
use headland_core::tracking::{
    simulate_closed_loop, tracking_errors, Disturbance, TrackerConfig, TrackingLog, TrackingStats,
};
use headland_core::vehicle::{Trajectory, TrajectoryOrigin, VehicleModel, VehicleState};
use serde::Serialize;

use crate::render::{render_plan, Canvas, Overlay};
use crate::sweep::{run_sweep, write_outputs, Planners, Range, SweepSpec};
use crate::trajectory_io::{load_trajectory, vehicle_from_spec, TrajectoryFile};

/// Exit code for unreadable or invalid input.
pub const EXIT_INPUT_ERROR: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "headland", version, about = "Headland turning planner and tracking simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Print progress and solver logs to standard error.
    #[arg(long, global = true)]
    pub verbose: bool,
    /// Seed recorded with every run; the pipeline itself is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan one headland turn and write trajectory, report and SVG.
    Plan(PlanArgs),
    /// Run the beta x D feasibility sweep over typical fields.
    Sweep(SweepArgs),
    /// Track a planned trajectory with the NMPC controller in simulation.
    Track(TrackArgs),
    /// Check a scenario file and optionally re-certify a trajectory on it.
    Validate(ValidateArgs),
    /// Draw a scenario with optional trajectories as SVG.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Lane to leave; defaults to the scenario's turn.
    #[arg(long)]
    pub from: Option<usize>,
    /// Lane to enter; defaults to the scenario's turn.
    #[arg(long)]
    pub to: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20.0)]
    pub timeout_s: f64,
    /// Comma-separated subset of classic,ours.
    #[arg(long, default_value = "classic,ours")]
    pub planners: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON sweep spec; the range flags are ignored when given.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Heading offsets in degrees, min:max:step.
    #[arg(long, default_value = "-25:25:2.5", allow_hyphen_values = true)]
    pub beta: String,
    /// Headland widths in metres, min:max:step.
    #[arg(long = "headland", default_value = "4:10:0.25")]
    pub headland: String,
    /// Lanes crossed by the turn: from lane 0 to lane `skip`.
    #[arg(long, default_value_t = 3)]
    pub skip: usize,
    #[arg(long, default_value = "tractor")]
    pub vehicle: String,
    #[arg(long, default_value_t = 20.0)]
    pub timeout_s: f64,
    #[arg(long, default_value = "classic,ours")]
    pub planners: String,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, default_value = "sweep")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Vehicle preset; defaults to the one recorded in the trajectory.
    #[arg(long)]
    pub vehicle: Option<String>,
    #[arg(long, default_value = "track")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub horizon: usize,
    #[arg(long, default_value_t = 30.0)]
    pub rate_hz: f64,
    #[arg(long, default_value_t = 1.0)]
    pub settle_s: f64,
    /// Initial pose offset `dx,dy,dtheta`.
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<String>,
    /// Lateral drift in m/s, positive to the left.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub drift: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Trajectory files to overlay; may be repeated.
    #[arg(long)]
    pub trajectory: Vec<PathBuf>,
    #[arg(long, default_value = "scene.svg")]
    pub out: PathBuf,
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Plan(a) => cmd_plan(a, cli.seed, cli.verbose),
        Command::Sweep(a) => cmd_sweep(a, cli.verbose),
        Command::Track(a) => cmd_track(a, cli.seed),
        Command::Validate(a) => cmd_validate(a),
        Command::Render(a) => cmd_render(a),
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenario(&text).with_context(|| format!("loading scenario {}", path.display()))
}

pub fn optimizer_config(s: &Scenario) -> Result<OptimizerConfig> {
    let mut cfg: OptimizerConfig = match &s.optimizer {
        Some(v) => serde_json::from_value(v.clone()).context("optimizer block")?,
        None => OptimizerConfig::default(),
    };
    cfg.d_min_overrides = s.d_min;
    cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(cfg)
}

fn resolve_turn(s: &Scenario, from: Option<usize>, to: Option<usize>) -> Result<TurnDoc> {
    let turn = match (from, to, s.turn) {
        (Some(f), Some(t), _) => TurnDoc { from: f, to: t },
        (f, t, Some(d)) => TurnDoc {
            from: f.unwrap_or(d.from),
            to: t.unwrap_or(d.to),
        },
        _ => bail!("no turn given: pass --from and --to or add a turn block to the scenario"),
    };
    for lane in [turn.from, turn.to] {
        if s.map.endpoint(lane).is_none() {
            bail!("scenario has no lane {lane}");
        }
    }
    Ok(turn)
}

#[derive(Debug, Serialize)]
pub struct ClassicReport {
    pub pattern: TurnPattern,
    pub shift_m: f64,
    pub collides: bool,
    pub path_length_m: f64,
}

#[derive(Debug, Serialize)]
pub struct OursReport {
    pub status: PlanStatus,
    pub coarse_source: Option<CoarseSource>,
    pub optimizer_outcome: Option<SolveOutcome>,
    pub solver_status: Option<String>,
    pub iterations: Option<usize>,
    pub objective: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub path_length_m: Option<f64>,
    pub duration_s: Option<f64>,
    pub reversals: Option<usize>,
    pub certificate: Option<CertificateReport>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct PlanReport {
    pub scenario: Option<String>,
    pub vehicle: String,
    pub turn: TurnDoc,
    pub seed: u64,
    pub status: PlanStatus,
    pub exit_code: i32,
    pub classic: Option<ClassicReport>,
    pub ours: Option<OursReport>,
}

#[derive(Debug, Serialize)]
struct PlanTimings {
    stage1_s: f64,
    stage2_s: f64,
    classic_s: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn poses(traj: &Trajectory) -> Vec<Pose2D> {
    traj.states.iter().map(|s| s.pose).collect()
}

pub fn cmd_plan(a: &PlanArgs, seed: u64, verbose: bool) -> Result<i32> {
    let scenario = load_scenario(&a.scenario)?;
    let planners = Planners::parse(&a.planners)?;
    let turn = resolve_turn(&scenario, a.from, a.to)?;
    if !(a.timeout_s > 0.0) {
        bail!("--timeout-s must be positive");
    }
    let cfg = PlannerConfig {
        optimizer: optimizer_config(&scenario)?,
        timeout_s: a.timeout_s,
        ..PlannerConfig::default()
    };
    let model = &scenario.vehicle;
    let map = &scenario.map;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let mut timings = PlanTimings { stage1_s: 0.0, stage2_s: 0.0, classic_s: 0.0 };
    let began = Instant::now();
    let classic = planners.classic.then(|| classic_rows(map, turn.from, turn.to, model)).flatten();
    timings.classic_s = began.elapsed().as_secs_f64();
    let classic_report = classic.as_ref().map(|c| ClassicReport {
        pattern: c.pattern,
        shift_m: c.shift,
        collides: !c.feasible,
        path_length_m: c.path.length(),
    });

    let mut overlays_owned: Vec<(String, Vec<Pose2D>, &str, bool, bool)> = Vec::new();
    if let Some(c) = &classic {
        let label = if c.feasible { "classic" } else { "classic (colliding)" };
        overlays_owned.push((label.into(), c.path.points.iter().map(|p| p.pose).collect(), "#ef6c00", true, !c.feasible));
    }

    let mut status = match &classic {
        Some(c) if c.feasible => PlanStatus::Success,
        _ => PlanStatus::Infeasible,
    };
    let mut ours_report = None;
    if planners.ours {
        let out = plan_rows(map, turn.from, turn.to, model, &cfg)
            .context("lane out of range")?
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        status = out.status;
        timings.stage1_s = out.timings.stage1_s;
        timings.stage2_s = out.timings.stage2_s;
        if verbose {
            for n in &out.notes {
                eprintln!("{n}");
            }
        }
        if let Some(r) = &out.report {
            if !r.log.is_empty() {
                std::fs::write(a.out.join("solver.log"), r.log.join("\n") + "\n")?;
            }
        }
        let traj = out.trajectory();
        if let Some(t) = traj {
            let cert = out.report.as_ref().map(|r| &r.certificate);
            std::fs::write(a.out.join("trajectory.json"), TrajectoryFile::new(t, model, cert).to_json())?;
            overlays_owned.push(("optimized".into(), poses(t), "#1565c0", false, true));
        } else if let Some(c) = &out.coarse {
            overlays_owned.push(("coarse".into(), c.path.points.iter().map(|p| p.pose).collect(), "#6a1b9a", true, false));
        }
        ours_report = Some(OursReport {
            status: out.status,
            coarse_source: out.coarse.as_ref().map(|c| c.source),
            optimizer_outcome: out.report.as_ref().map(|r| r.status),
            solver_status: out.report.as_ref().and_then(|r| r.solver_status).map(|s| format!("{s:?}")),
            iterations: out.report.as_ref().map(|r| r.iterations),
            objective: out.report.as_ref().map(|r| r.objective),
            kkt_residual: out.report.as_ref().map(|r| r.kkt_residual),
            path_length_m: traj.map(|t| t.path_length()),
            duration_s: traj.map(|t| t.duration()),
            reversals: traj.map(|t| t.direction_changes()),
            certificate: out.report.as_ref().map(|r| r.certificate.clone()),
            notes: out.notes.clone(),
        });
    }
    if status != PlanStatus::Success {
        let _ = std::fs::remove_file(a.out.join("trajectory.json"));
    }

    let report = PlanReport {
        scenario: scenario.name.clone(),
        vehicle: model.name.clone(),
        turn,
        seed,
        status,
        exit_code: status.exit_code(),
        classic: classic_report,
        ours: ours_report,
    };
    write_json(&a.out.join("report.json"), &report)?;
    write_json(&a.out.join("timings.json"), &timings)?;
    let overlays: Vec<Overlay> = overlays_owned
        .iter()
        .map(|(label, poses, colour, dashed, footprints)| Overlay {
            label,
            poses: poses.clone(),
            colour,
            dashed: *dashed,
            footprints: *footprints,
        })
        .collect();
    std::fs::write(a.out.join("plan.svg"), render_plan(map, model, &overlays))?;
    if verbose {
        eprintln!("status {:?}, outputs in {}", status, a.out.display());
    }
    Ok(status.exit_code())
}

pub fn sweep_spec(a: &SweepArgs) -> Result<SweepSpec> {
    let spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing sweep spec {}", path.display()))?
        }
        None => SweepSpec {
            beta_range: Range::parse(&a.beta)?,
            d_range: Range::parse(&a.headland)?,
            skip_rows: a.skip,
            vehicle: a.vehicle.clone(),
            timeout_s: a.timeout_s,
            planners: Planners::parse(&a.planners)?,
        },
    };
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_sweep(a: &SweepArgs, verbose: bool) -> Result<i32> {
    let spec = sweep_spec(a)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let cells = run_sweep(&spec, a.jobs, Some(&a.out.join("sweep.partial.csv")), verbose)?;
    write_outputs(&a.out, &spec, &cells)?;
    std::fs::remove_file(a.out.join("sweep.partial.csv"))?;
    write_json(&a.out.join("spec.json"), &spec)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct TrackReport {
    origin: TrajectoryOrigin,
    vehicle: String,
    seed: u64,
    reference_duration_s: f64,
    stats: TrackingStats,
}

pub const TRACKING_CSV_HEADER: [&str; 16] = [
    "time_s",
    "x",
    "y",
    "theta",
    "v",
    "phi",
    "ref_x",
    "ref_y",
    "ref_theta",
    "ref_v",
    "ref_phi",
    "accel",
    "steer_rate",
    "cross_track_m",
    "heading_rad",
    "solver_failed",
];

pub fn write_tracking_csv(path: &Path, log: &TrackingLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(TRACKING_CSV_HEADER)?;
    for t in &log.ticks {
        let (s, r) = (t.state.to_array(), t.reference.to_array());
        let mut row: Vec<String> = vec![format!("{:.4}", t.time)];
        row.extend(s.iter().chain(&r).map(|v| format!("{v:.6}")));
        row.push(format!("{:.6}", t.control.accel));
        row.push(format!("{:.6}", t.control.steer_rate));
        row.push(format!("{:.6}", t.cross_track_error));
        row.push(format!("{:.6}", t.heading_error));
        row.push(t.solver_failed.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_offset(s: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad offset {s:?}"))?;
    match v.as_slice() {
        [x, y, t] => Ok([*x, *y, *t]),
        _ => bail!("offset must be dx,dy,dtheta"),
    }
}

pub fn tracking_svg(traj: &Trajectory, log: &TrackingLog) -> String {
    let planned: Vec<_> = traj.states.iter().map(|s| s.pose.position()).collect();
    let actual: Vec<_> = log.ticks.iter().map(|t| t.state.pose.position()).collect();
    let mut lo = planned[0];
    let mut hi = planned[0];
    for p in planned.iter().chain(&actual) {
        lo = headland_core::geometry::Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = headland_core::geometry::Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let pad = headland_core::geometry::Vec2::new(1.5, 1.5);
    let mut c = Canvas::new(lo - pad, hi + pad, 60.0);
    c.polyline(&planned, "#1565c0", 2.0, true);
    c.polyline(&actual, "#e53935", 1.5, false);
    c.text(lo - pad + headland_core::geometry::Vec2::new(0.2, 0.3), 12.0, "planned (dashed) vs tracked");
    c.finish()
}

pub fn cmd_track(a: &TrackArgs, seed: u64) -> Result<i32> {
    let (file, traj) = load_trajectory(&a.trajectory)?;
    if traj.states.len() < 2 {
        bail!("trajectory {} has no motion to track", a.trajectory.display());
    }
    let model = match (&a.vehicle, &file.vehicle) {
        (Some(name), _) => VehicleModel::preset(name)?,
        (None, Some(spec)) => vehicle_from_spec(spec)?,
        (None, None) => VehicleModel::tractor(),
    };
    let cfg = TrackerConfig {
        horizon_steps: a.horizon,
        control_rate: a.rate_hz,
        settle_time: a.settle_s,
        ..TrackerConfig::default()
    };
    cfg.validate()?;
    let disturbance = Disturbance {
        initial_offset: a.offset.as_deref().map(parse_offset).transpose()?.unwrap_or_default(),
        lateral_drift: a.drift,
    };
    let log = simulate_closed_loop(&cfg, &model, &traj, Some(&disturbance))?;
    let stats = tracking_errors(&log)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_tracking_csv(&a.out.join("tracking.csv"), &log)?;
    write_json(
        &a.out.join("tracking_stats.json"),
        &TrackReport {
            origin: traj.origin,
            vehicle: model.name.clone(),
            seed,
            reference_duration_s: traj.duration(),
            stats,
        },
    )?;
    std::fs::write(a.out.join("tracking.svg"), tracking_svg(&traj, &log))?;
    Ok(0)
}

/// Re-certifies a trajectory on a scenario. Endpoints come from the
/// scenario's turn when it has one, otherwise from the trajectory itself.
pub fn recertify(scenario: &Scenario, traj: &Trajectory) -> Result<CertificateReport> {
    let cfg = optimizer_config(scenario)?;
    let (start, end) = match scenario.turn.and_then(|t| Some((scenario.map.endpoint(t.from)?, scenario.map.endpoint(t.to)?))) {
        Some((f, t)) => (VehicleState::at_rest(f.exit), VehicleState::at_rest(t.entry)),
        None => (traj.states[0], *traj.states.last().expect("non-empty")),
    };
    Ok(certify_solution(traj, &start, &end, &scenario.map, &scenario.vehicle, &cfg))
}

pub fn cmd_validate(a: &ValidateArgs) -> Result<i32> {
    let scenario = load_scenario(&a.scenario)?;
    let diags = validate_map(&scenario.map);
    for d in &diags {
        eprintln!("polygons {:?}: {}", d.indices, d.message);
    }
    if !diags.is_empty() {
        return Ok(EXIT_INPUT_ERROR);
    }
    println!(
        "scenario ok: {} obstacles, {} lanes, vehicle {}",
        scenario.map.num_obstacles(),
        scenario.map.row_endpoints.len(),
        scenario.vehicle.name
    );
    if let Some(path) = &a.trajectory {
        let (_, traj) = load_trajectory(path)?;
        let cert = recertify(&scenario, &traj)?;
        println!("{}", serde_json::to_string_pretty(&cert)?);
        if !cert.passed {
            return Ok(PlanStatus::Infeasible.exit_code());
        }
    }
    Ok(0)
}

pub fn cmd_render(a: &RenderArgs) -> Result<i32> {
    let scenario = load_scenario(&a.scenario)?;
    let colours = ["#1565c0", "#ef6c00", "#6a1b9a", "#00897b"];
    let mut loaded = Vec::new();
    for path in &a.trajectory {
        let (_, traj) = load_trajectory(path)?;
        loaded.push((path.display().to_string(), traj));
    }
    let overlays: Vec<Overlay> = loaded
        .iter()
        .enumerate()
        .map(|(i, (label, traj))| Overlay {
            label,
            poses: poses(traj),
            colour: colours[i % colours.len()],
            dashed: false,
            footprints: true,
        })
        .collect();
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&a.out, render_plan(&scenario.map, &scenario.vehicle, &overlays))
        .with_context(|| format!("writing {}", a.out.display()))?;
    Ok(0)
}
