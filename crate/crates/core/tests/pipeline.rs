mod support;

use std::time::Instant;

use headland_core::field::{build_typical_field, FieldMap, TypicalFieldSpec};
use headland_core::geometry::Vec2;
use headland_core::optimizer::{
    build_problem, certify_solution, trajectory_objective, solve_trajectory, OptimizerConfig, SolveOutcome,
};
use headland_core::pipeline::{classic_rows, plan_rows, plan_turn, CoarseSource, PlanOutcome, PlanStatus, PlannerConfig};
use headland_core::vehicle::{rollout, ControlInput, VehicleModel, VehicleState};
use support::geometry_oracle::{bound_violation, euler_residual, min_clearance};

fn assert_certified(out: &PlanOutcome, map: &FieldMap, model: &VehicleModel, d_min: f64) {
    let traj = out.trajectory().expect("certified trajectory");
    assert!(out.report.as_ref().unwrap().certificate.passed);
    assert!(min_clearance(traj, map, model) >= d_min - 1e-3);
    assert!(euler_residual(traj, model.wheelbase) <= 1e-6);
    assert!(bound_violation(traj, model) <= 1e-7);
}

#[test]
fn skip_turn_in_tilted_headland_beats_classic() {
    let map = build_typical_field(&TypicalFieldSpec::new(6.0, 10.0)).unwrap();
    let model = VehicleModel::tractor();
    let classic = classic_rows(&map, 0, 3, &model).unwrap();
    assert!(!classic.feasible);
    let began = Instant::now();
    let out = plan_rows(&map, 0, 3, &model, &PlannerConfig::default()).unwrap().unwrap();
    assert!(began.elapsed().as_secs_f64() < 20.0);
    assert_eq!(out.status, PlanStatus::Success, "{:?}", out.notes);
    assert_certified(&out, &map, &model, 0.1);
}

#[test]
fn adjacent_turn_in_narrow_headland_reverses() {
    let map = build_typical_field(&TypicalFieldSpec::new(5.5, 10.0)).unwrap();
    let model = VehicleModel::tractor();
    assert!(!classic_rows(&map, 0, 1, &model).unwrap().feasible);
    let out = plan_rows(&map, 0, 1, &model, &PlannerConfig::default()).unwrap().unwrap();
    assert_eq!(out.status, PlanStatus::Success, "{:?}", out.notes);
    assert_certified(&out, &map, &model, 0.1);
    assert!(out.trajectory().unwrap().direction_changes() >= 1);
}

#[test]
fn wide_headland_uses_pattern_guess() {
    let map = build_typical_field(&TypicalFieldSpec::new(9.0, 0.0)).unwrap();
    let model = VehicleModel::tractor();
    let out = plan_rows(&map, 0, 3, &model, &PlannerConfig::default()).unwrap().unwrap();
    assert_eq!(out.status, PlanStatus::Success);
    assert!(matches!(out.coarse.as_ref().unwrap().source, CoarseSource::Pattern(_)));
    assert_certified(&out, &map, &model, 0.1);
    let report = out.report.as_ref().unwrap();
    assert!(matches!(report.status, SolveOutcome::Optimal | SolveOutcome::FeasibleSuboptimal));
    let guess = &out.coarse.as_ref().unwrap().guess;
    assert!(report.objective <= trajectory_objective(guess, &OptimizerConfig::default().weights));
}

#[test]
fn headland_too_shallow_is_infeasible() {
    let map = build_typical_field(&TypicalFieldSpec::new(4.0, 0.0)).unwrap();
    let model = VehicleModel::tractor();
    let out = plan_rows(&map, 0, 3, &model, &PlannerConfig::default()).unwrap().unwrap();
    assert_eq!(out.status, PlanStatus::Infeasible);
    assert_eq!(out.status.exit_code(), 2);
    assert!(out.trajectory().is_none());
}

#[test]
fn translation_moves_the_solution_rigidly() {
    let map = build_typical_field(&TypicalFieldSpec::new(8.0, 0.0)).unwrap();
    let model = VehicleModel::tractor();
    let cfg = PlannerConfig::default();
    let offset = Vec2::new(13.7, -4.2);
    let moved = map.translated(offset);
    let a = plan_rows(&map, 1, 4, &model, &cfg).unwrap().unwrap();
    let b = plan_rows(&moved, 1, 4, &model, &cfg).unwrap().unwrap();
    let (ta, tb) = (a.trajectory().unwrap(), b.trajectory().unwrap());
    assert_eq!(ta.states.len(), tb.states.len());
    for (s, t) in ta.states.iter().zip(&tb.states) {
        assert!((s.pose.position() + offset).distance(t.pose.position()) < 1e-3);
    }
}

#[test]
fn free_space_exact_guess_stays_dynamic_and_cheaper() {
    let model = VehicleModel::tractor();
    let map = FieldMap {
        boundary_obstacles: Vec::new(),
        crop_rows: Vec::new(),
        static_obstacles: Vec::new(),
        row_endpoints: Vec::new(),
        typical: None,
    };
    let start = VehicleState::new(0.0, 0.0, 0.0, 0.0, 0.0);
    let controls: Vec<ControlInput> = (0..40)
        .map(|i| ControlInput::new(if i < 20 { 0.3 } else { -0.3 }, 0.0))
        .collect();
    let guess = rollout(&model, &start, &controls);
    let cfg = OptimizerConfig::default();
    let problem = build_problem(&guess, &map, &model, &cfg).unwrap();
    let report = solve_trajectory(&problem, &guess, &map, &model, &cfg, None);
    assert_eq!(report.status, SolveOutcome::Optimal);
    assert!(report.certificate.dynamics_residual <= 1e-6);
    assert!(report.objective <= trajectory_objective(&guess, &cfg.weights) + 1e-9);
    let end = *guess.states.last().unwrap();
    assert!(certify_solution(&report.trajectory, &start, &end, &map, &model, &cfg).passed);
}

#[test]
fn colliding_goal_is_reported_infeasible() {
    let mut map = build_typical_field(&TypicalFieldSpec::new(8.0, 0.0)).unwrap();
    let goal = map.endpoint(2).unwrap().entry;
    map.static_obstacles.push(headland_core::geometry::ConvexPolytope::rectangle(
        goal.position() - Vec2::new(0.5, 0.5),
        goal.position() + Vec2::new(0.5, 0.5),
    ));
    let model = VehicleModel::tractor();
    let start = map.endpoint(0).unwrap().exit;
    let out = plan_turn(&map, &start, &goal, &model, &PlannerConfig::default()).unwrap();
    assert_eq!(out.status, PlanStatus::Infeasible);
}
