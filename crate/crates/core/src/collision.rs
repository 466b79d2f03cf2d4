//! Footprint-versus-map collision queries with a bounding-circle prefilter.

use crate::field::{FieldMap, ObstacleClass};
use crate::geometry::{intersects, min_distance, transform_polytope, ConvexPolytope, Pose2D, Vec2};
use crate::vehicle::VehicleModel;

struct Obstacle {
    class: ObstacleClass,
    poly: ConvexPolytope,
    centre: Vec2,
    radius: f64,
}

fn enclosing_circle(p: &ConvexPolytope) -> (Vec2, f64) {
    let (lo, hi) = p.bounds();
    let c = (lo + hi) * 0.5;
    let r = p.vertices.iter().map(|v| v.distance(c)).fold(0.0, f64::max);
    (c, r)
}

pub struct CollisionChecker {
    obstacles: Vec<Obstacle>,
    bodies: Vec<(ConvexPolytope, Vec2, f64)>,
    /// Minimum clearance; poses closer than this count as colliding.
    pub margin: f64,
}

impl CollisionChecker {
    pub fn new(map: &FieldMap, model: &VehicleModel, classes: &[ObstacleClass], margin: f64) -> Self {
        let obstacles = map
            .obstacles()
            .filter(|(c, _)| classes.contains(c))
            .map(|(class, p)| {
                let (centre, radius) = enclosing_circle(p);
                Obstacle {
                    class,
                    poly: p.clone(),
                    centre,
                    radius,
                }
            })
            .collect();
        let bodies = model
            .bodies
            .iter()
            .map(|b| {
                let (c, r) = enclosing_circle(b);
                (b.clone(), c, r)
            })
            .collect();
        Self {
            obstacles,
            bodies,
            margin,
        }
    }

    pub fn all(map: &FieldMap, model: &VehicleModel, margin: f64) -> Self {
        Self::new(
            map,
            model,
            &[ObstacleClass::Boundary, ObstacleClass::Crop, ObstacleClass::Obstacle],
            margin,
        )
    }

    pub fn collides(&self, pose: &Pose2D) -> bool {
        for (body, c, r) in &self.bodies {
            let centre = pose.apply(*c);
            let mut placed: Option<ConvexPolytope> = None;
            for o in &self.obstacles {
                if centre.distance(o.centre) > r + o.radius + self.margin {
                    continue;
                }
                let f = placed.get_or_insert_with(|| transform_polytope(body, pose));
                let hit = if self.margin > 0.0 {
                    min_distance(f, &o.poly) < self.margin
                } else {
                    intersects(f, &o.poly)
                };
                if hit {
                    return true;
                }
            }
        }
        false
    }

    /// Smallest footprint distance to any obstacle within `horizon`;
    /// `horizon` if none is closer.
    pub fn clearance(&self, pose: &Pose2D, horizon: f64) -> f64 {
        let mut best = horizon;
        for (body, c, r) in &self.bodies {
            let centre = pose.apply(*c);
            let f = transform_polytope(body, pose);
            for o in &self.obstacles {
                if centre.distance(o.centre) - r - o.radius > best {
                    continue;
                }
                best = best.min(min_distance(&f, &o.poly));
            }
        }
        best
    }

    /// Obstacle indices (in checker order) hit at this pose, with classes.
    pub fn hits(&self, pose: &Pose2D) -> Vec<(usize, ObstacleClass)> {
        let mut out = Vec::new();
        for (i, o) in self.obstacles.iter().enumerate() {
            for (body, _, _) in &self.bodies {
                if intersects(&transform_polytope(body, pose), &o.poly) {
                    out.push((i, o.class));
                    break;
                }
            }
        }
        out
    }
}
