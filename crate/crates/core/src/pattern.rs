//! Classic headland turns and the shifting pattern planner.
//!
//! All patterns are laid out in the start pose's frame as left turns that
//! end at `(dx, d, π)`; right turns are mirror images. Straights absorb the
//! along-row offset `dx` between the two row ends.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::collision::CollisionChecker;
use crate::field::{FieldMap, ObstacleClass};
use crate::geometry::{angle_diff, Pose2D};
use crate::path::{Direction, GeometricPath, PathSegment, DEFAULT_DS};
use crate::vehicle::VehicleModel;

use Direction::{Forward, Reverse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum TurnPattern {
    U,
    Omega,
    SwitchBack,
    CircleBack,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnQuery {
    pub start: Pose2D,
    pub end: Pose2D,
    pub turn_radius: f64,
    pub skip_distance: f64,
    pub shift_step: f64,
}

impl TurnQuery {
    /// Skip distance taken as the lateral offset of `end` in the start frame.
    pub fn new(start: Pose2D, end: Pose2D, turn_radius: f64) -> Self {
        Self {
            start,
            end,
            turn_radius,
            skip_distance: start.relative(&end).y.abs(),
            shift_step: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PatternError {
    #[error("pattern infeasible: {0}")]
    PatternInfeasible(String),
    #[error("pattern planner failed: {0}")]
    PatternFailure(String),
}

/// Omega-turn side-arc angle: the three tangent arcs close when
/// `2R cos α − R = d/2`. Solved by bisection.
pub fn omega_angle(radius: f64, skip: f64) -> f64 {
    let g = |a: f64| 2.0 * radius * a.cos() - radius - 0.5 * skip;
    let (mut lo, mut hi) = (0.0, FRAC_PI_2);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn turn_segments(pattern: TurnPattern, r: f64, d: f64) -> Vec<PathSegment> {
    let k = 1.0 / r;
    let quarter = FRAC_PI_2 * r;
    match pattern {
        TurnPattern::U => vec![
            PathSegment::arc(k, quarter, Forward),
            PathSegment::line(d - 2.0 * r, Forward),
            PathSegment::arc(k, quarter, Forward),
        ],
        TurnPattern::Omega => {
            let a = omega_angle(r, d);
            vec![
                PathSegment::arc(-k, r * a, Forward),
                PathSegment::arc(k, r * (PI + 2.0 * a), Forward),
                PathSegment::arc(-k, r * a, Forward),
            ]
        }
        TurnPattern::SwitchBack => vec![
            PathSegment::arc(k, quarter, Forward),
            PathSegment::line(2.0 * r - d, Reverse),
            PathSegment::arc(k, quarter, Forward),
        ],
        TurnPattern::CircleBack => vec![
            PathSegment::arc(k, quarter, Forward),
            PathSegment::line(d, Forward),
            PathSegment::arc(-k, quarter, Reverse),
            PathSegment::line(2.0 * r, Forward),
        ],
    }
}

/// Free-space turn from `q.start` to `q.end`, optionally moved forward by
/// `shift` metres with straight connectors on both sides.
pub fn generate_turn_shifted(
    pattern: TurnPattern,
    q: &TurnQuery,
    shift: f64,
) -> Result<GeometricPath, PatternError> {
    let r = q.turn_radius;
    let d = q.skip_distance;
    if !(r > 0.0) || !(d > 0.0) {
        return Err(PatternError::PatternInfeasible(
            "turn radius and skip distance must be positive".into(),
        ));
    }
    match pattern {
        TurnPattern::U if d < 2.0 * r - 1e-12 => {
            return Err(PatternError::PatternInfeasible(format!(
                "U-turn needs d >= 2R ({d:.3} < {:.3})",
                2.0 * r
            )))
        }
        TurnPattern::Omega | TurnPattern::SwitchBack | TurnPattern::CircleBack if d >= 2.0 * r => {
            return Err(PatternError::PatternInfeasible(format!(
                "{pattern:?} needs d < 2R ({d:.3} >= {:.3})",
                2.0 * r
            )))
        }
        _ => {}
    }
    let rel = q.start.relative(&q.end);
    if angle_diff(rel.theta, PI).abs() > 1e-6 {
        return Err(PatternError::PatternInfeasible(
            "end heading must oppose the start heading".into(),
        ));
    }
    let mirror = if rel.y < 0.0 { -1.0 } else { 1.0 };
    let dx = rel.x;

    let mut segs = Vec::new();
    segs.push(PathSegment::line(shift + dx.max(0.0), Forward));
    segs.extend(turn_segments(pattern, r, d).into_iter().map(|mut s| {
        s.curvature *= mirror;
        s
    }));
    segs.push(PathSegment::line(shift + (-dx).max(0.0), Forward));
    Ok(GeometricPath::from_segments(q.start, segs, DEFAULT_DS))
}

pub fn generate_turn(pattern: TurnPattern, q: &TurnQuery) -> Result<GeometricPath, PatternError> {
    generate_turn_shifted(pattern, q, 0.0)
}

fn path_hits(checker: &CollisionChecker, path: &GeometricPath) -> bool {
    path.points.iter().any(|p| checker.collides(&p.pose))
}

/// Whether any footprint along the path touches a boundary or static obstacle.
pub fn collide_with_headland(map: &FieldMap, path: &GeometricPath, model: &VehicleModel) -> bool {
    let c = CollisionChecker::new(map, model, &[ObstacleClass::Boundary, ObstacleClass::Obstacle], 0.0);
    path_hits(&c, path)
}

/// Whether any footprint along the path touches a crop row.
pub fn collide_with_crops(map: &FieldMap, path: &GeometricPath, model: &VehicleModel) -> bool {
    let c = CollisionChecker::new(map, model, &[ObstacleClass::Crop], 0.0);
    path_hits(&c, path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternTurn {
    pub path: GeometricPath,
    pub pattern: TurnPattern,
    pub shift: f64,
}

/// Headland depth available for shifting: the typical-field `D`, otherwise
/// the free distance ahead of the start pose plus the half vehicle length
/// by which lane poses stick out past the row end.
pub fn headland_depth(map: &FieldMap, start: &Pose2D, model: &VehicleModel) -> f64 {
    if let Some(t) = &map.typical {
        return t.headland_width;
    }
    let dir = start.heading();
    let mut s = 0.0;
    while s < 100.0 {
        let z = start.position() + dir * s;
        if map.headland_obstacles().any(|o| o.contains(z, 0.0)) {
            break;
        }
        s += 0.05;
    }
    s + 0.5 * model.length()
}

/// Shifts `pattern` forward in steps until it clears the crop rows. Returns
/// the first clear path, or the last attempt if the shift budget runs out.
fn shift_until_clear(
    pattern: TurnPattern,
    q: &TurnQuery,
    crops: &CollisionChecker,
    cap: f64,
) -> Result<(GeometricPath, f64, bool), PatternError> {
    let mut n = 0usize;
    loop {
        let shift = n as f64 * q.shift_step;
        let path = generate_turn_shifted(pattern, q, shift)?;
        if !path_hits(crops, &path) {
            return Ok((path, shift, true));
        }
        if (n + 1) as f64 * q.shift_step > cap + 1e-9 {
            return Ok((path, shift, false));
        }
        n += 1;
    }
}

/// Pattern planner: Ω (falling back to switch-back on headland contact) when
/// `d < 2R`, U otherwise; the turn is then shifted forward until it clears
/// the crop rows and re-checked against the headland.
pub fn plan_pattern_turn(
    map: &FieldMap,
    q: &TurnQuery,
    model: &VehicleModel,
) -> Result<PatternTurn, PatternError> {
    if q.turn_radius < crate::vehicle::min_turn_radius(model) - 1e-9 {
        return Err(PatternError::PatternInfeasible(
            "turn radius below the vehicle minimum".into(),
        ));
    }
    let headland = CollisionChecker::new(map, model, &[ObstacleClass::Boundary, ObstacleClass::Obstacle], 0.0);
    let crops = CollisionChecker::new(map, model, &[ObstacleClass::Crop], 0.0);

    let pattern = if q.skip_distance < 2.0 * q.turn_radius {
        let omega = generate_turn(TurnPattern::Omega, q)?;
        if path_hits(&headland, &omega) {
            TurnPattern::SwitchBack
        } else {
            TurnPattern::Omega
        }
    } else {
        TurnPattern::U
    };

    let cap = (headland_depth(map, &q.start, model) - model.width()).max(0.0);
    let (path, shift, clear) = shift_until_clear(pattern, q, &crops, cap)?;
    if !clear {
        return Err(PatternError::PatternFailure(format!(
            "{pattern:?} still hits crop rows after shifting {cap:.2} m"
        )));
    }
    if path_hits(&headland, &path) {
        return Err(PatternError::PatternFailure(format!(
            "{pattern:?} shifted by {shift:.2} m hits the headland"
        )));
    }
    Ok(PatternTurn {
        path,
        pattern,
        shift,
    })
}

/// Outcome of the classic fixed-pattern baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicResult {
    pub pattern: TurnPattern,
    pub path: GeometricPath,
    pub shift: f64,
    pub feasible: bool,
}

/// Classic baseline: a U-turn when `d >= 2R`, otherwise a switch-back or
/// circle-back, each shifted to clear the crop rows. Feasible iff the
/// resulting path is collision-free. Returns the first feasible candidate,
/// or the first candidate when none is.
pub fn classic_turn(map: &FieldMap, q: &TurnQuery, model: &VehicleModel) -> Result<ClassicResult, PatternError> {
    let all = CollisionChecker::all(map, model, 0.0);
    let crops = CollisionChecker::new(map, model, &[ObstacleClass::Crop], 0.0);
    let candidates: &[TurnPattern] = if q.skip_distance >= 2.0 * q.turn_radius {
        &[TurnPattern::U]
    } else {
        &[TurnPattern::SwitchBack, TurnPattern::CircleBack]
    };
    let cap = (headland_depth(map, &q.start, model) - model.width()).max(0.0);
    let mut first: Option<ClassicResult> = None;
    for &pattern in candidates {
        let (path, shift, _) = shift_until_clear(pattern, q, &crops, cap)?;
        let feasible = !path_hits(&all, &path);
        let result = ClassicResult {
            pattern,
            path,
            shift,
            feasible,
        };
        if feasible {
            return Ok(result);
        }
        first.get_or_insert(result);
    }
    Ok(first.expect("at least one candidate"))
}
