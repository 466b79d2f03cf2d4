//! Kinodynamic search over `(x, y, heading)` with fixed-length motion
//! primitives, periodic Reeds–Shepp shortcuts to the goal and a
//! graph-guided heuristic.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::CollisionChecker;
use crate::field::FieldMap;
use crate::geometry::{angle_diff, normalize_angle, Pose2D, Vec2};
use crate::graph::{build_directional_graph, GoalHeuristic};
use crate::path::{Direction, GeometricPath, PathSegment, DEFAULT_DS};
use crate::reeds_shepp::reeds_shepp_with_resolution;
use crate::vehicle::{min_turn_radius, VehicleModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub grid_resolution_xy: f64,
    pub grid_resolution_theta: f64,
    pub primitive_arc_length: f64,
    pub reverse_cost_factor: f64,
    pub direction_switch_penalty: f64,
    pub analytic_expansion_period: usize,
    /// Seconds.
    pub timeout: f64,
    /// Spacing of collision-checked poses along primitives.
    pub ds: f64,
    pub goal_tolerance_xy: f64,
    pub goal_tolerance_theta: f64,
    /// Clearance required of expanded poses, lowered to what the start and
    /// goal poses have.
    pub safety_margin: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_resolution_xy: 0.25,
            grid_resolution_theta: 10f64.to_radians(),
            primitive_arc_length: 0.5,
            reverse_cost_factor: 1.5,
            direction_switch_penalty: 1.0,
            analytic_expansion_period: 20,
            timeout: 20.0,
            ds: DEFAULT_DS,
            goal_tolerance_xy: 0.1,
            goal_tolerance_theta: 0.05,
            safety_margin: 0.05,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let positive = [
            self.grid_resolution_xy,
            self.grid_resolution_theta,
            self.primitive_arc_length,
            self.timeout,
            self.ds,
            self.goal_tolerance_xy,
            self.goal_tolerance_theta,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.analytic_expansion_period == 0 {
            return Err(SearchError::InvalidConfig("parameters must be positive".into()));
        }
        if !(self.safety_margin >= 0.0) {
            return Err(SearchError::InvalidConfig("safety margin must be non-negative".into()));
        }
        if !(self.reverse_cost_factor >= 1.0) || !(self.direction_switch_penalty >= 0.0) {
            return Err(SearchError::InvalidConfig(
                "reverse factor must be >= 1 and switch penalty >= 0".into(),
            ));
        }
        let bins = 2.0 * PI / self.grid_resolution_theta;
        if (bins - bins.round()).abs() > 1e-6 {
            return Err(SearchError::InvalidConfig("heading resolution must divide 2*pi".into()));
        }
        Ok(())
    }

    fn heading_bins(&self) -> i64 {
        (2.0 * PI / self.grid_resolution_theta).round() as i64
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("start pose is in collision")]
    StartInCollision,
    #[error("goal pose is in collision")]
    GoalInCollision,
    #[error("search exceeded its time budget after {expansions} expansions")]
    SearchTimeout { expansions: usize },
    #[error("open set exhausted after {expansions} expansions")]
    NoPath { expansions: usize },
}

/// Grid cell plus the direction of the motion that reached it; the start
/// node has no direction.
pub type CellKey = (i64, i64, i64, Option<Direction>);

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub path: GeometricPath,
    pub cost: f64,
    pub expansions: usize,
    pub closed: Vec<CellKey>,
    /// Whether the tail came from a Reeds–Shepp connection.
    pub analytic: bool,
}

/// Length with reverse travel weighted, plus a penalty per direction change.
pub fn path_cost(path: &GeometricPath, cfg: &SearchConfig) -> f64 {
    let travel: f64 = path
        .segments
        .iter()
        .map(|s| match s.direction {
            Direction::Forward => s.length,
            Direction::Reverse => s.length * cfg.reverse_cost_factor,
        })
        .sum();
    travel + cfg.direction_switch_penalty * path.reversals() as f64
}

struct Node {
    pose: Pose2D,
    g: f64,
    dir: Option<Direction>,
    parent: Option<usize>,
    segment: Option<PathSegment>,
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    g: f64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.total_cmp(&other.g))
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn cell(pose: &Pose2D, dir: Option<Direction>, cfg: &SearchConfig) -> CellKey {
    let bins = cfg.heading_bins();
    let t = (normalize_angle(pose.theta).rem_euclid(2.0 * PI) / cfg.grid_resolution_theta).round() as i64;
    (
        (pose.x / cfg.grid_resolution_xy).floor() as i64,
        (pose.y / cfg.grid_resolution_xy).floor() as i64,
        t.rem_euclid(bins),
        dir,
    )
}

fn path_clear(checker: &CollisionChecker, path: &GeometricPath, lo: Vec2, hi: Vec2) -> bool {
    path.points.iter().all(|p| {
        let q = p.pose;
        q.x >= lo.x && q.x <= hi.x && q.y >= lo.y && q.y <= hi.y && !checker.collides(&q)
    })
}

fn reconstruct(nodes: &[Node], mut i: usize) -> Vec<PathSegment> {
    let mut segs = Vec::new();
    while let Some(s) = nodes[i].segment {
        segs.push(s);
        i = nodes[i].parent.expect("non-root nodes have parents");
    }
    segs.reverse();
    segs
}

pub fn plan_hybrid(
    map: &FieldMap,
    start: &Pose2D,
    goal: &Pose2D,
    model: &VehicleModel,
    cfg: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    plan_hybrid_with_deadline(map, start, goal, model, cfg, None)
}

/// Like [`plan_hybrid`], stopping at `deadline` if that comes before the
/// configured timeout.
pub fn plan_hybrid_with_deadline(
    map: &FieldMap,
    start: &Pose2D,
    goal: &Pose2D,
    model: &VehicleModel,
    cfg: &SearchConfig,
    deadline: Option<Instant>,
) -> Result<SearchResult, SearchError> {
    cfg.validate()?;
    let began = Instant::now();
    let mut deadline_at = began + Duration::from_secs_f64(cfg.timeout);
    if let Some(d) = deadline {
        deadline_at = deadline_at.min(d);
    }
    let exact = CollisionChecker::all(map, model, 0.0);
    if exact.collides(start) {
        return Err(SearchError::StartInCollision);
    }
    if exact.collides(goal) {
        return Err(SearchError::GoalInCollision);
    }
    // a start or goal closer than the margin would otherwise be unreachable
    let margin = cfg
        .safety_margin
        .min(0.9 * exact.clearance(start, cfg.safety_margin))
        .min(0.9 * exact.clearance(goal, cfg.safety_margin));
    let checker = CollisionChecker::all(map, model, margin);

    let radius = min_turn_radius(model);
    let kappa = 1.0 / radius;
    let graph = build_directional_graph(map, 0.5 * model.width()).ok();
    let heuristic = GoalHeuristic::new(graph.as_ref(), *goal, radius);

    // search window: everything the map covers plus room to turn
    let pad = 2.0 * radius + model.reach();
    let (mut lo, mut hi) = if map.num_obstacles() > 0 {
        map.bounds()
    } else {
        (start.position(), start.position())
    };
    for p in [start.position(), goal.position()] {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let (lo, hi) = (lo - Vec2::new(pad, pad), hi + Vec2::new(pad, pad));

    let primitives: Vec<PathSegment> = [Direction::Forward, Direction::Reverse]
        .into_iter()
        .flat_map(|d| [kappa, 0.0, -kappa].map(|k| PathSegment::arc(k, cfg.primitive_arc_length, d)))
        .collect();

    let mut nodes = vec![Node {
        pose: *start,
        g: 0.0,
        dir: None,
        parent: None,
        segment: None,
    }];
    let mut open = BinaryHeap::from([Open {
        f: heuristic.value(start),
        g: 0.0,
        node: 0,
    }]);
    let mut best_g: HashMap<CellKey, f64> = HashMap::from([(cell(start, None, cfg), 0.0)]);
    let mut closed: HashSet<CellKey> = HashSet::new();
    let mut closed_order = Vec::new();
    let mut expansions = 0usize;

    let finish = |segs: Vec<PathSegment>, expansions: usize, closed: Vec<CellKey>, analytic: bool| {
        let path = GeometricPath::from_segments(*start, segs, cfg.ds);
        SearchResult {
            cost: path_cost(&path, cfg),
            path,
            expansions,
            closed,
            analytic,
        }
    };

    while let Some(Open { node, g, .. }) = open.pop() {
        let pose = nodes[node].pose;
        let key = cell(&pose, nodes[node].dir, cfg);
        if g > nodes[node].g || !closed.insert(key) {
            continue;
        }
        closed_order.push(key);
        expansions += 1;
        if Instant::now() >= deadline_at {
            return Err(SearchError::SearchTimeout { expansions });
        }

        if pose.position().distance(goal.position()) <= cfg.goal_tolerance_xy
            && angle_diff(pose.theta, goal.theta).abs() <= cfg.goal_tolerance_theta
        {
            return Ok(finish(reconstruct(&nodes, node), expansions, closed_order, false));
        }

        if expansions == 1 || expansions % cfg.analytic_expansion_period == 0 {
            let shot = reeds_shepp_with_resolution(&pose, goal, radius, cfg.ds);
            if path_clear(&checker, &shot, lo, hi) {
                let mut segs = reconstruct(&nodes, node);
                segs.extend(shot.segments);
                return Ok(finish(segs, expansions, closed_order, true));
            }
        }

        for prim in &primitives {
            let sweep = GeometricPath::from_segments(pose, vec![*prim], cfg.ds);
            let end = sweep.end_pose();
            let dir = Some(prim.direction);
            let k = cell(&end, dir, cfg);
            if closed.contains(&k) {
                continue;
            }
            let mut step = prim.length;
            if prim.direction == Direction::Reverse {
                step *= cfg.reverse_cost_factor;
            }
            if nodes[node].dir.is_some_and(|d| d != prim.direction) {
                step += cfg.direction_switch_penalty;
            }
            let ng = g + step;
            if best_g.get(&k).is_some_and(|&b| b <= ng) {
                continue;
            }
            if !path_clear(&checker, &sweep, lo, hi) {
                continue;
            }
            best_g.insert(k, ng);
            nodes.push(Node {
                pose: end,
                g: ng,
                dir,
                parent: Some(node),
                segment: Some(*prim),
            });
            open.push(Open {
                f: ng + heuristic.value(&end),
                g: ng,
                node: nodes.len() - 1,
            });
        }
    }
    Err(SearchError::NoPath { expansions })
}
