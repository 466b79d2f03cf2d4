//! Piecewise constant-curvature paths with forward and reverse segments.

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Pose2D};

/// Default spacing between sampled path poses.
pub const DEFAULT_DS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Reverse => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }
}

/// A segment of constant steering curvature `tan(phi)/L` (positive steers
/// left). Driving in reverse turns the heading by `-curvature * length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSegment {
    pub curvature: f64,
    pub length: f64,
    pub direction: Direction,
}

impl PathSegment {
    pub fn line(length: f64, direction: Direction) -> Self {
        Self {
            curvature: 0.0,
            length,
            direction,
        }
    }

    pub fn arc(curvature: f64, length: f64, direction: Direction) -> Self {
        Self {
            curvature,
            length,
            direction,
        }
    }

    pub fn is_arc(&self) -> bool {
        self.curvature != 0.0
    }

    /// Heading change over the segment.
    pub fn turn(&self) -> f64 {
        self.direction.sign() * self.curvature * self.length
    }
}

/// Pose after driving `s` metres along a segment from `from`. Headings are
/// left unwrapped.
pub fn advance(from: &Pose2D, seg: &PathSegment, s: f64) -> Pose2D {
    let sign = seg.direction.sign();
    let signed = sign * s;
    let k = seg.curvature;
    let th = from.theta;
    if k.abs() < 1e-12 {
        return Pose2D {
            x: from.x + signed * th.cos(),
            y: from.y + signed * th.sin(),
            theta: th,
        };
    }
    let th1 = th + k * signed;
    Pose2D {
        x: from.x + (th1.sin() - th.sin()) / k,
        y: from.y - (th1.cos() - th.cos()) / k,
        theta: th1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub pose: Pose2D,
    pub direction: Direction,
    /// Steering curvature in effect at this point.
    pub curvature: f64,
    /// Distance travelled from the start.
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricPath {
    pub start: Pose2D,
    pub segments: Vec<PathSegment>,
    pub points: Vec<PathPoint>,
    pub resolution: f64,
}

impl GeometricPath {
    pub fn from_segments(start: Pose2D, segments: Vec<PathSegment>, resolution: f64) -> Self {
        let segments: Vec<PathSegment> = segments.into_iter().filter(|s| s.length > 1e-12).collect();
        let mut points = Vec::new();
        let mut pose = start;
        let mut travelled = 0.0;
        points.push(PathPoint {
            pose: wrap(pose),
            direction: segments.first().map_or(Direction::Forward, |s| s.direction),
            curvature: segments.first().map_or(0.0, |s| s.curvature),
            s: 0.0,
        });
        for seg in &segments {
            let n = (seg.length / resolution).ceil().max(1.0) as usize;
            for k in 1..=n {
                let s = seg.length * k as f64 / n as f64;
                let p = advance(&pose, seg, s);
                points.push(PathPoint {
                    pose: wrap(p),
                    direction: seg.direction,
                    curvature: seg.curvature,
                    s: travelled + s,
                });
            }
            pose = advance(&pose, seg, seg.length);
            travelled += seg.length;
        }
        Self {
            start,
            segments,
            points,
            resolution,
        }
    }

    pub fn empty(start: Pose2D) -> Self {
        Self::from_segments(start, Vec::new(), DEFAULT_DS)
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn end_pose(&self) -> Pose2D {
        let mut pose = self.start;
        for seg in &self.segments {
            pose = advance(&pose, seg, seg.length);
        }
        wrap(pose)
    }

    /// Pose (heading unwrapped) at arc length `s`, with the index of the
    /// segment containing it. Ties at segment joints go to the later segment.
    pub fn sample(&self, s: f64) -> (Pose2D, usize) {
        let mut pose = self.start;
        let mut rest = s.max(0.0);
        for (i, seg) in self.segments.iter().enumerate() {
            if rest < seg.length || i + 1 == self.segments.len() {
                return (advance(&pose, seg, rest.min(seg.length)), i);
            }
            pose = advance(&pose, seg, seg.length);
            rest -= seg.length;
        }
        (pose, 0)
    }

    /// Number of direction changes between consecutive segments.
    pub fn reversals(&self) -> usize {
        self.segments
            .windows(2)
            .filter(|w| w[0].direction != w[1].direction)
            .count()
    }

    pub fn max_curvature(&self) -> f64 {
        self.segments.iter().map(|s| s.curvature.abs()).fold(0.0, f64::max)
    }

    /// Concatenates `other`, which must start where this path ends.
    pub fn concat(&self, other: &GeometricPath) -> GeometricPath {
        let mut segs = self.segments.clone();
        segs.extend_from_slice(&other.segments);
        GeometricPath::from_segments(self.start, segs, self.resolution)
    }
}

fn wrap(p: Pose2D) -> Pose2D {
    Pose2D {
        theta: normalize_angle(p.theta),
        ..p
    }
}
