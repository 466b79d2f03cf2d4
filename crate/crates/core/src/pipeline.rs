//! End-to-end headland turn: Stage I coarse path (pattern turn, else
//! Hybrid A*) followed by Stage II optimization, with the classic baseline
//! evaluated alongside.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::field::FieldMap;
use crate::geometry::Pose2D;
use crate::hybrid_astar::{plan_hybrid_with_deadline, SearchConfig, SearchError};
use crate::optimizer::{
    build_problem, coarse_to_trajectory_with_speed, solve_trajectory, OptimizeError, OptimizerConfig, SolveOutcome,
    SolveReport, StageTimings,
};
use crate::path::GeometricPath;
use crate::pattern::{classic_turn, plan_pattern_turn, ClassicResult, TurnPattern, TurnQuery};
use crate::vehicle::{min_turn_radius, Trajectory, TrajectoryOrigin, VehicleModel, VehicleState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub search: SearchConfig,
    pub optimizer: OptimizerConfig,
    /// Wall-clock limit for both stages together, seconds.
    pub timeout_s: f64,
    /// Skip the pattern planner and always search.
    pub search_only: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            optimizer: OptimizerConfig::default(),
            timeout_s: 20.0,
            search_only: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoarseSource {
    Pattern(TurnPattern),
    HybridAStar,
}

#[derive(Debug, Clone)]
pub struct CoarsePlan {
    pub source: CoarseSource,
    pub path: GeometricPath,
    pub guess: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanStatus {
    Success,
    Infeasible,
    TimedOut,
}

impl PlanStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            PlanStatus::Success => 0,
            PlanStatus::Infeasible => 2,
            PlanStatus::TimedOut => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub status: PlanStatus,
    /// Last coarse plan handed to Stage II.
    pub coarse: Option<CoarsePlan>,
    pub report: Option<SolveReport>,
    pub timings: StageTimings,
    /// Stage I and Stage II messages, in order.
    pub notes: Vec<String>,
}

impl PlanOutcome {
    /// The certified trajectory, when the plan succeeded.
    pub fn trajectory(&self) -> Option<&Trajectory> {
        match (&self.report, self.status) {
            (Some(r), PlanStatus::Success) => Some(&r.trajectory),
            _ => None,
        }
    }

    pub fn path_length(&self) -> Option<f64> {
        self.trajectory().map(|t| t.path_length())
    }
}

fn guess_for(path: &GeometricPath, model: &VehicleModel, cfg: &PlannerConfig, source: CoarseSource) -> Trajectory {
    let mut guess = coarse_to_trajectory_with_speed(path, model, cfg.optimizer.guess_speed);
    guess.origin = match source {
        CoarseSource::Pattern(_) => TrajectoryOrigin::PatternTurn,
        CoarseSource::HybridAStar => TrajectoryOrigin::HybridAStar,
    };
    guess
}

fn optimize(
    coarse: &CoarsePlan,
    map: &FieldMap,
    start: &VehicleState,
    goal: &VehicleState,
    model: &VehicleModel,
    cfg: &PlannerConfig,
    deadline: Instant,
) -> Result<SolveReport, OptimizeError> {
    let mut problem = build_problem(&coarse.guess, map, model, &cfg.optimizer)?;
    problem.set_endpoints(start, goal);
    Ok(solve_trajectory(&problem, &coarse.guess, map, model, &cfg.optimizer, Some(deadline)))
}

/// Plans a turn between two poses, starting and ending at rest. Stage I
/// tries the pattern planner, then Hybrid A*; if Stage II fails on a pattern
/// guess, the search guess is tried next.
pub fn plan_turn(
    map: &FieldMap,
    start: &Pose2D,
    goal: &Pose2D,
    model: &VehicleModel,
    cfg: &PlannerConfig,
) -> Result<PlanOutcome, OptimizeError> {
    cfg.optimizer.validate()?;
    let began = Instant::now();
    let deadline = began + Duration::from_secs_f64(cfg.timeout_s.max(0.0));
    let start_state = VehicleState::at_rest(*start);
    let goal_state = VehicleState::at_rest(*goal);
    let mut timings = StageTimings::default();
    let mut notes = Vec::new();
    let mut last_coarse = None;
    let mut last_report: Option<SolveReport> = None;

    let mut pattern_used = false;
    let mut searched = false;
    loop {
        let stage1 = Instant::now();
        let coarse = if !pattern_used && !cfg.search_only {
            pattern_used = true;
            let q = TurnQuery::new(*start, *goal, min_turn_radius(model));
            match plan_pattern_turn(map, &q, model) {
                Ok(turn) => {
                    notes.push(format!("pattern {:?} shifted {:.2} m", turn.pattern, turn.shift));
                    let source = CoarseSource::Pattern(turn.pattern);
                    Some(CoarsePlan {
                        guess: guess_for(&turn.path, model, cfg, source),
                        source,
                        path: turn.path,
                    })
                }
                Err(e) => {
                    notes.push(e.to_string());
                    None
                }
            }
        } else if !searched {
            searched = true;
            match plan_hybrid_with_deadline(map, start, goal, model, &cfg.search, Some(deadline)) {
                Ok(res) => {
                    notes.push(format!(
                        "hybrid A* {:.2} m, {} reversals, {} expansions",
                        res.path.length(),
                        res.path.reversals(),
                        res.expansions
                    ));
                    let source = CoarseSource::HybridAStar;
                    Some(CoarsePlan {
                        guess: guess_for(&res.path, model, cfg, source),
                        source,
                        path: res.path,
                    })
                }
                Err(e) => {
                    notes.push(e.to_string());
                    timings.stage1_s += stage1.elapsed().as_secs_f64();
                    let status = match e {
                        SearchError::SearchTimeout { .. } => PlanStatus::TimedOut,
                        _ if last_report.as_ref().is_some_and(|r| r.status == SolveOutcome::TimedOut) => {
                            PlanStatus::TimedOut
                        }
                        _ => PlanStatus::Infeasible,
                    };
                    return Ok(PlanOutcome {
                        status,
                        coarse: last_coarse,
                        report: last_report,
                        timings,
                        notes,
                    });
                }
            }
        } else {
            unreachable!("both stage I planners already tried");
        };
        timings.stage1_s += stage1.elapsed().as_secs_f64();
        let Some(coarse) = coarse else { continue };

        let stage2 = Instant::now();
        let report = optimize(&coarse, map, &start_state, &goal_state, model, cfg, deadline)?;
        timings.stage2_s += stage2.elapsed().as_secs_f64();
        notes.push(format!(
            "stage II {:?} after {} iterations, objective {:.4}",
            report.status, report.iterations, report.objective
        ));
        let success = report.status.is_success();
        let timed_out = report.status == SolveOutcome::TimedOut || Instant::now() >= deadline;
        last_coarse = Some(coarse);
        last_report = Some(report);
        if success || searched || timed_out {
            let status = if success {
                PlanStatus::Success
            } else if timed_out {
                PlanStatus::TimedOut
            } else {
                PlanStatus::Infeasible
            };
            return Ok(PlanOutcome {
                status,
                coarse: last_coarse,
                report: last_report,
                timings,
                notes,
            });
        }
    }
}

/// [`plan_turn`] between the exit pose of one lane and the entry pose of
/// another. `None` when either lane is unknown.
pub fn plan_rows(
    map: &FieldMap,
    from_row: usize,
    to_row: usize,
    model: &VehicleModel,
    cfg: &PlannerConfig,
) -> Option<Result<PlanOutcome, OptimizeError>> {
    let start = map.endpoint(from_row)?.exit;
    let goal = map.endpoint(to_row)?.entry;
    Some(plan_turn(map, &start, &goal, model, cfg))
}

/// Classic baseline between two lanes.
pub fn classic_rows(map: &FieldMap, from_row: usize, to_row: usize, model: &VehicleModel) -> Option<ClassicResult> {
    let start = map.endpoint(from_row)?.exit;
    let goal = map.endpoint(to_row)?.entry;
    let q = TurnQuery::new(start, goal, min_turn_radius(model));
    classic_turn(map, &q, model).ok()
}
