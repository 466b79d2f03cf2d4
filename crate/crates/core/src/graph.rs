//! Row/corridor connectivity graph used to guide the kinodynamic search
//! through headlands.
//!
//! Each row end gets an anchor at its lane pose and a standoff node halfway
//! between the anchor and the headland obstacle straight ahead. Standoffs
//! and mitred corners of headland obstacles form a visibility graph whose
//! edges keep `clearance` from every obstacle, crop rows included. Corner
//! waypoints behind the row ends are dropped so routes cannot wrap around
//! the far end of the rows.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::field::FieldMap;
use crate::geometry::{point_distance, ray_hit, segment_distance_to, ConvexPolytope, Pose2D, Vec2};
use crate::reeds_shepp::reeds_shepp_length;

/// Used when nothing lies ahead of a row end.
const OPEN_STANDOFF: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Anchor { row: usize },
    Standoff { row: usize },
    Waypoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphNode {
    pub position: Vec2,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalGraph {
    pub nodes: Vec<GraphNode>,
    /// Outgoing edges `(target, length)` per node.
    pub edges: Vec<Vec<(usize, f64)>>,
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("row ends {0:?} cannot be reached through the headland")]
    GraphDisconnected(Vec<usize>),
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl DirectionalGraph {
    pub fn num_edges(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn anchor(&self, row: usize) -> Option<usize> {
        self.nodes.iter().position(|n| n.kind == NodeKind::Anchor { row })
    }

    pub fn nearest(&self, p: Vec2) -> Option<usize> {
        (0..self.nodes.len()).min_by(|&a, &b| {
            p.distance(self.nodes[a].position)
                .total_cmp(&p.distance(self.nodes[b].position))
        })
    }

    /// Shortest path length from every node to `target` (infinite when
    /// unreachable), by Dijkstra over reversed edges.
    pub fn distances_to(&self, target: usize) -> Vec<f64> {
        let n = self.nodes.len();
        let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (from, out) in self.edges.iter().enumerate() {
            for &(to, w) in out {
                incoming[to].push((from, w));
            }
        }
        let mut dist = vec![f64::INFINITY; n];
        dist[target] = 0.0;
        let mut heap = BinaryHeap::from([Entry(0.0, target)]);
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &incoming[u] {
                if d + w < dist[v] {
                    dist[v] = d + w;
                    heap.push(Entry(d + w, v));
                }
            }
        }
        dist
    }

    pub fn distance(&self, from: usize, to: usize) -> f64 {
        self.distances_to(to)[from]
    }
}

fn clear_point(obstacles: &[&ConvexPolytope], p: Vec2, clearance: f64) -> bool {
    obstacles.iter().all(|o| point_distance(o, p) >= clearance * 0.999)
}

fn clear_segment(obstacles: &[&ConvexPolytope], a: Vec2, b: Vec2, clearance: f64) -> bool {
    obstacles
        .iter()
        .all(|o| segment_distance_to(o, a, b) >= clearance * 0.999)
}

/// Corners of `p` pushed outward so that both adjacent edges are
/// `clearance` away.
fn mitred_corners(p: &ConvexPolytope, clearance: f64) -> Vec<Vec2> {
    let n = p.vertices.len();
    (0..n)
        .map(|i| {
            let a = p.normals[(i + n - 1) % n];
            let b = p.normals[i];
            let bis = a + b;
            let cos_half = (0.5 * (1.0 + a.dot(b))).sqrt().max(0.2);
            p.vertices[i] + bis * (clearance / (bis.norm() * cos_half))
        })
        .collect()
}

pub fn build_directional_graph(map: &FieldMap, clearance: f64) -> Result<DirectionalGraph, GraphError> {
    let mut nodes: Vec<GraphNode> = map
        .row_endpoints
        .iter()
        .map(|e| GraphNode {
            position: e.exit.position(),
            kind: NodeKind::Anchor { row: e.row },
        })
        .collect();
    if nodes.len() < 2 {
        let edges = vec![Vec::new(); nodes.len()];
        return Ok(DirectionalGraph { nodes, edges, clearance });
    }

    let obstacles: Vec<&ConvexPolytope> = map.obstacles().map(|(_, p)| p).collect();
    let headland: Vec<&ConvexPolytope> = map.headland_obstacles().collect();
    for e in &map.row_endpoints {
        let o = e.exit.position();
        let h = e.exit.heading();
        let ahead = headland
            .iter()
            .filter_map(|p| ray_hit(p, o, h))
            .fold(f64::INFINITY, f64::min);
        let s = if ahead.is_finite() { 0.5 * ahead } else { OPEN_STANDOFF };
        nodes.push(GraphNode {
            position: o + h * s,
            kind: NodeKind::Standoff { row: e.row },
        });
    }
    // waypoints stay on the headland side of the row ends
    let ahead_dir = map
        .row_endpoints
        .iter()
        .fold(Vec2::new(0.0, 0.0), |acc, e| acc + e.exit.heading());
    let ahead_dir = ahead_dir * (1.0 / ahead_dir.norm().max(1e-12));
    let front = map
        .row_endpoints
        .iter()
        .map(|e| ahead_dir.dot(e.exit.position()))
        .fold(f64::INFINITY, f64::min)
        - clearance;
    for p in &headland {
        for c in mitred_corners(p, clearance) {
            if ahead_dir.dot(c) >= front && clear_point(&obstacles, c, clearance) {
                nodes.push(GraphNode {
                    position: c,
                    kind: NodeKind::Waypoint,
                });
            }
        }
    }

    let n = nodes.len();
    let mut edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let link = |edges: &mut Vec<Vec<(usize, f64)>>, i: usize, j: usize| {
        let (a, b) = (nodes[i].position, nodes[j].position);
        if clear_segment(&obstacles, a, b, clearance) {
            let w = a.distance(b);
            edges[i].push((j, w));
            edges[j].push((i, w));
        }
    };
    for i in 0..n {
        match nodes[i].kind {
            NodeKind::Anchor { row } => {
                let s = nodes
                    .iter()
                    .position(|m| m.kind == NodeKind::Standoff { row })
                    .expect("every anchor has a standoff");
                link(&mut edges, i, s);
            }
            _ => {
                for j in i + 1..n {
                    if !matches!(nodes[j].kind, NodeKind::Anchor { .. }) {
                        link(&mut edges, i, j);
                    }
                }
            }
        }
    }
    let graph = DirectionalGraph { nodes, edges, clearance };

    let anchors: Vec<(usize, usize)> = graph
        .nodes
        .iter()
        .enumerate()
        .filter_map(|(i, n)| match n.kind {
            NodeKind::Anchor { row } => Some((i, row)),
            _ => None,
        })
        .collect();
    let reach = graph.distances_to(anchors[0].0);
    let cut: Vec<usize> = anchors
        .iter()
        .filter(|(i, _)| !reach[*i].is_finite())
        .map(|&(_, row)| row)
        .collect();
    if !cut.is_empty() {
        return Err(GraphError::GraphDisconnected(cut));
    }
    Ok(graph)
}

/// Graph distances to a fixed goal, precomputed for repeated heuristic
/// queries.
pub struct GoalHeuristic<'a> {
    graph: Option<&'a DirectionalGraph>,
    goal: Pose2D,
    radius: f64,
    goal_node: usize,
    to_goal: Vec<f64>,
}

impl<'a> GoalHeuristic<'a> {
    pub fn new(graph: Option<&'a DirectionalGraph>, goal: Pose2D, radius: f64) -> Self {
        let graph = graph.filter(|g| g.num_edges() > 0);
        let (goal_node, to_goal) = match graph {
            Some(g) => {
                let n = g.nearest(goal.position()).expect("graph with edges has nodes");
                (n, g.distances_to(n))
            }
            None => (0, Vec::new()),
        };
        Self {
            graph,
            goal,
            radius,
            goal_node,
            to_goal,
        }
    }

    /// Graph-guided distance, or `None` without a usable graph route.
    pub fn graph_term(&self, pose: &Pose2D) -> Option<f64> {
        let g = self.graph?;
        let p = pose.position();
        let n = g.nearest(p)?;
        if n == self.goal_node {
            return Some(p.distance(self.goal.position()));
        }
        let via = self.to_goal[n];
        via.is_finite().then(|| {
            p.distance(g.nodes[n].position) + via + g.nodes[self.goal_node].position.distance(self.goal.position())
        })
    }

    pub fn value(&self, pose: &Pose2D) -> f64 {
        let rs = reeds_shepp_length(pose, &self.goal, self.radius);
        match self.graph_term(pose) {
            Some(t) => rs.max(t),
            None => rs,
        }
    }
}

/// `max(Reeds–Shepp length, graph-guided distance)` from `pose` to `goal`.
pub fn heuristic(graph: &DirectionalGraph, pose: &Pose2D, goal: &Pose2D, radius: f64) -> f64 {
    GoalHeuristic::new(Some(graph), *goal, radius).value(pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_typical_field, TypicalFieldSpec};
    use crate::vehicle::{min_turn_radius, VehicleModel};
    use std::collections::HashMap;
    use std::f64::consts::PI;

    const CLEAR: f64 = 0.75;

    fn four_lanes(d: f64) -> FieldMap {
        let mut spec = TypicalFieldSpec::new(d, 0.0);
        spec.n_rows = 5;
        build_typical_field(&spec).unwrap()
    }

    #[test]
    fn rectangular_corridor_distances() {
        let map = four_lanes(10.0);
        assert_eq!(map.row_endpoints.len(), 4);
        let g = build_directional_graph(&map, CLEAR).unwrap();
        let w = map.typical.unwrap().row_width;
        for i in 0..4 {
            let ai = map.endpoint(i).unwrap().exit.position();
            // standoff sits halfway to the boundary at x = D
            let standoff = 0.5 * (10.0 - ai.x);
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let d = g.distance(g.anchor(i).unwrap(), g.anchor(j).unwrap());
                let want = (i as f64 - j as f64).abs() * w + 2.0 * standoff;
                assert!((d - want).abs() < 1e-3, "{i}->{j}: {d} vs {want}");
            }
        }
    }

    fn blocked(map: &FieldMap) -> FieldMap {
        let mut m = map.clone();
        m.static_obstacles
            .push(ConvexPolytope::rectangle(Vec2::new(4.5, 4.5), Vec2::new(7.5, 5.5)));
        m
    }

    /// Shortest obstacle-clear path on a fine 16-connected grid.
    fn grid_distance(map: &FieldMap, a: Vec2, b: Vec2, clearance: f64) -> f64 {
        let h = 0.05;
        let (lo, hi) = (Vec2::new(0.0, -1.0), Vec2::new(10.0, 11.0));
        let nx = ((hi.x - lo.x) / h) as i64;
        let ny = ((hi.y - lo.y) / h) as i64;
        let cell = |p: Vec2| (((p.x - lo.x) / h).round() as i64, ((p.y - lo.y) / h).round() as i64);
        let at = |c: (i64, i64)| Vec2::new(lo.x + c.0 as f64 * h, lo.y + c.1 as f64 * h);
        let obstacles: Vec<_> = map.obstacles().map(|(_, p)| p.clone()).collect();
        let free = |c: (i64, i64)| obstacles.iter().all(|o| point_distance(o, at(c)) >= clearance);
        let mut moves = Vec::new();
        for dx in -2i64..=2 {
            for dy in -2i64..=2 {
                if (dx, dy) != (0, 0) && num_gcd(dx.abs(), dy.abs()) == 1 {
                    moves.push((dx, dy));
                }
            }
        }
        let (s, t) = (cell(a), cell(b));
        let mut dist: HashMap<(i64, i64), f64> = HashMap::from([(s, 0.0)]);
        let mut heap = BinaryHeap::new();
        heap.push(std::cmp::Reverse((0u64, s)));
        let scale = 1e9;
        while let Some(std::cmp::Reverse((d, c))) = heap.pop() {
            let d = d as f64 / scale;
            if c == t {
                return d + a.distance(at(s)) + b.distance(at(t));
            }
            if d > dist[&c] {
                continue;
            }
            for &(dx, dy) in &moves {
                let n = (c.0 + dx, c.1 + dy);
                if n.0 < 0 || n.1 < 0 || n.0 > nx || n.1 > ny || !free(n) {
                    continue;
                }
                // intermediate cell of a knight move must be free too
                if (dx.abs() == 2 || dy.abs() == 2) && !free((c.0 + dx / 2, c.1 + dy / 2)) {
                    continue;
                }
                let nd = d + h * ((dx * dx + dy * dy) as f64).sqrt();
                if nd < *dist.get(&n).unwrap_or(&f64::INFINITY) {
                    dist.insert(n, nd);
                    heap.push(std::cmp::Reverse(((nd * scale) as u64, n)));
                }
            }
        }
        f64::INFINITY
    }

    fn num_gcd(a: i64, b: i64) -> i64 {
        if b == 0 { a } else { num_gcd(b, a % b) }
    }

    #[test]
    fn obstacle_in_corridor_is_routed_around() {
        let open = four_lanes(10.0);
        let map = blocked(&open);
        let g0 = build_directional_graph(&open, CLEAR).unwrap();
        let g = build_directional_graph(&map, CLEAR).unwrap();
        let (a, b) = (g.anchor(0).unwrap(), g.anchor(3).unwrap());
        let d_open = g0.distance(g0.anchor(0).unwrap(), g0.anchor(3).unwrap());
        let d = g.distance(a, b);
        assert!(d > d_open + 0.5, "{d} vs {d_open}");
        let oracle = grid_distance(&map, g.nodes[a].position, g.nodes[b].position, CLEAR);
        assert!(d >= oracle / 1.03 - 0.05, "{d} vs grid {oracle}");
        // every edge keeps clearance, checked by dense sampling
        for (i, out) in g.edges.iter().enumerate() {
            for &(j, _) in out {
                let (p, q) = (g.nodes[i].position, g.nodes[j].position);
                for k in 0..=50 {
                    let z = p + (q - p) * (k as f64 / 50.0);
                    for (_, o) in map.obstacles() {
                        assert!(point_distance(o, z) >= CLEAR * 0.99);
                    }
                }
            }
        }
    }

    #[test]
    fn single_row_has_no_edges() {
        let mut map = four_lanes(10.0);
        map.row_endpoints.truncate(1);
        let g = build_directional_graph(&map, CLEAR).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn wall_across_headland_disconnects() {
        let mut map = four_lanes(10.0);
        map.static_obstacles
            .push(ConvexPolytope::rectangle(Vec2::new(0.3, 4.8), Vec2::new(10.0, 5.2)));
        match build_directional_graph(&map, CLEAR) {
            Err(GraphError::GraphDisconnected(rows)) => assert_eq!(rows, vec![2, 3]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn heuristic_bounds() {
        let map = four_lanes(10.0);
        let g = build_directional_graph(&map, CLEAR).unwrap();
        let r = min_turn_radius(&VehicleModel::tractor());
        let goal = map.endpoint(3).unwrap().entry;
        assert_eq!(heuristic(&g, &goal, &goal, r), 0.0);
        let start = map.endpoint(0).unwrap().exit;
        let h = heuristic(&g, &start, &goal, r);
        assert!(h >= start.position().distance(goal.position()));
        assert!(h >= reeds_shepp_length(&start, &goal, r) - 1e-12);

        let empty = DirectionalGraph {
            nodes: Vec::new(),
            edges: Vec::new(),
            clearance: CLEAR,
        };
        let a = Pose2D::new(1.0, 2.0, 0.3);
        let b = Pose2D::new(-4.0, 3.0, PI);
        assert_eq!(heuristic(&empty, &a, &b, r), reeds_shepp_length(&a, &b, r));
    }
}
