//! Headland environments: parametric typical fields and polygon maps.
//!
//! World frame for typical fields: crop rows run along +x and end on a clip
//! line through the origin, tilted by `beta` from the vertical headland
//! boundary line `x = D`. Crop row `k` is centred on `y = k·w`; the vehicle
//! drives in lane `k`, the alley between crop rows `k` and `k + 1`.

use serde::{Deserialize, Serialize};

use crate::geometry::{intersects, ConvexPolytope, GeometryError, Pose2D, Vec2};
use crate::vehicle::{footprint_at, min_turn_radius, VehicleError, VehicleModel, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypicalFieldSpec {
    pub headland_width: f64,
    pub row_width: f64,
    pub tree_width: f64,
    /// Radians.
    pub beta: f64,
    pub n_rows: usize,
    pub row_length: f64,
}

impl TypicalFieldSpec {
    pub fn new(headland_width: f64, beta_deg: f64) -> Self {
        Self {
            headland_width,
            row_width: 2.5,
            tree_width: 0.4,
            beta: beta_deg.to_radians(),
            n_rows: 6,
            row_length: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleClass {
    Boundary,
    Crop,
    Obstacle,
}

/// Where a lane meets the headland. `exit` faces the headland, `entry` faces
/// back into the lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowEndpoint {
    pub row: usize,
    pub exit: Pose2D,
    pub entry: Pose2D,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldMap {
    pub boundary_obstacles: Vec<ConvexPolytope>,
    pub crop_rows: Vec<ConvexPolytope>,
    pub static_obstacles: Vec<ConvexPolytope>,
    pub row_endpoints: Vec<RowEndpoint>,
    pub typical: Option<TypicalFieldSpec>,
}

impl FieldMap {
    pub fn num_obstacles(&self) -> usize {
        self.boundary_obstacles.len() + self.crop_rows.len() + self.static_obstacles.len()
    }

    /// All obstacles in a fixed order: boundary, crop rows, static.
    pub fn obstacles(&self) -> impl Iterator<Item = (ObstacleClass, &ConvexPolytope)> {
        self.boundary_obstacles
            .iter()
            .map(|p| (ObstacleClass::Boundary, p))
            .chain(self.crop_rows.iter().map(|p| (ObstacleClass::Crop, p)))
            .chain(self.static_obstacles.iter().map(|p| (ObstacleClass::Obstacle, p)))
    }

    /// Boundary and static obstacles; the headland side of the world.
    pub fn headland_obstacles(&self) -> impl Iterator<Item = &ConvexPolytope> {
        self.boundary_obstacles.iter().chain(self.static_obstacles.iter())
    }

    pub fn endpoint(&self, row: usize) -> Option<&RowEndpoint> {
        self.row_endpoints.iter().find(|e| e.row == row)
    }

    /// Bounding box of every obstacle.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (_, p) in self.obstacles() {
            let (l, h) = p.bounds();
            lo = Vec2::new(lo.x.min(l.x), lo.y.min(l.y));
            hi = Vec2::new(hi.x.max(h.x), hi.y.max(h.y));
        }
        (lo, hi)
    }

    /// Whether a pose's footprint touches any obstacle.
    pub fn pose_collides(&self, model: &VehicleModel, pose: &Pose2D) -> bool {
        footprint_at(model, pose)
            .iter()
            .any(|f| self.obstacles().any(|(_, o)| intersects(f, o)))
    }

    pub fn translated(&self, offset: Vec2) -> FieldMap {
        let shift = Pose2D::new(offset.x, offset.y, 0.0);
        let tr = |v: &Vec<ConvexPolytope>| {
            v.iter()
                .map(|p| crate::geometry::transform_polytope(p, &shift))
                .collect()
        };
        FieldMap {
            boundary_obstacles: tr(&self.boundary_obstacles),
            crop_rows: tr(&self.crop_rows),
            static_obstacles: tr(&self.static_obstacles),
            row_endpoints: self
                .row_endpoints
                .iter()
                .map(|e| RowEndpoint {
                    row: e.row,
                    exit: shift.compose(&e.exit),
                    entry: shift.compose(&e.entry),
                })
                .collect(),
            typical: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("invalid typical field: {0}")]
    InvalidSpec(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {}", .0.join("; "))]
    Validation(Vec<String>),
}

impl From<VehicleError> for FieldError {
    fn from(e: VehicleError) -> Self {
        FieldError::Validation(vec![e.to_string()])
    }
}

/// Lateral margin beyond the outermost crop rows: three tractor turning
/// diameters.
pub fn lateral_margin() -> f64 {
    6.0 * min_turn_radius(&VehicleModel::tractor())
}

const BOUNDARY_DEPTH: f64 = 2.0;

/// Distance from the clip line into the headland of the rear axle of lane
/// poses, as a fraction of vehicle length.
const POSE_OFFSET: f64 = 0.5;

pub fn build_typical_field(spec: &TypicalFieldSpec) -> Result<FieldMap, FieldError> {
    build_typical_field_for(spec, &VehicleModel::tractor())
}

/// Like [`build_typical_field`], with lane poses placed by the length of
/// `model`.
pub fn build_typical_field_for(
    spec: &TypicalFieldSpec,
    model: &VehicleModel,
) -> Result<FieldMap, FieldError> {
    let s = spec;
    let bad = |m: &str| Err(FieldError::InvalidSpec(m.to_string()));
    if !(s.headland_width > 0.0) {
        return bad("headland width must be positive");
    }
    if !(s.tree_width > 0.0 && s.row_width > s.tree_width) {
        return bad("need row_width > tree_width > 0");
    }
    if !(s.beta.abs() < std::f64::consts::FRAC_PI_2) {
        return bad("|beta| must be below 90 degrees");
    }
    if s.n_rows < 2 {
        return bad("at least two crop rows are required");
    }
    if !(s.row_length > 0.0) {
        return bad("row length must be positive");
    }

    let tan_b = s.beta.tan();
    let clip = |y: f64| y * tan_b;
    let half = 0.5 * s.tree_width;
    let y_first = 0.0;
    let y_last = (s.n_rows - 1) as f64 * s.row_width;
    let x_far = clip(y_first).min(clip(y_last)) - s.row_length;

    let mut crop_rows = Vec::with_capacity(s.n_rows);
    for k in 0..s.n_rows {
        let yc = k as f64 * s.row_width;
        let (y0, y1) = (yc - half, yc + half);
        let ring = [
            Vec2::new(x_far, y0),
            Vec2::new(clip(y0), y0),
            Vec2::new(clip(y1), y1),
            Vec2::new(x_far, y1),
        ];
        crop_rows.push(ConvexPolytope::from_ring(&ring).map_err(geometry_invalid)?);
    }

    let margin = lateral_margin();
    let y_lo = y_first - margin;
    let y_hi = y_last + margin;
    let d = s.headland_width;
    let wall = 1.0;
    let boundary_obstacles = vec![
        ConvexPolytope::rectangle(Vec2::new(d, y_lo - wall), Vec2::new(d + BOUNDARY_DEPTH, y_hi + wall)),
        ConvexPolytope::rectangle(Vec2::new(x_far, y_lo - wall), Vec2::new(d, y_lo)),
        ConvexPolytope::rectangle(Vec2::new(x_far, y_hi), Vec2::new(d, y_hi + wall)),
    ];

    let offset = POSE_OFFSET * model.length();
    let row_endpoints = (0..s.n_rows - 1)
        .map(|k| {
            let y = (k as f64 + 0.5) * s.row_width;
            let x = clip(y) + offset;
            RowEndpoint {
                row: k,
                exit: Pose2D::new(x, y, 0.0),
                entry: Pose2D::new(x, y, std::f64::consts::PI),
            }
        })
        .collect();

    Ok(FieldMap {
        boundary_obstacles,
        crop_rows,
        static_obstacles: Vec::new(),
        row_endpoints,
        typical: Some(*spec),
    })
}

fn geometry_invalid(e: GeometryError) -> FieldError {
    FieldError::InvalidSpec(e.to_string())
}

/// One problem found by [`validate_map`].
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub indices: Vec<usize>,
    pub message: String,
}

pub fn validate_map(map: &FieldMap) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if map.num_obstacles() == 0 {
        out.push(Diagnostic {
            indices: vec![],
            message: "map has no obstacles".into(),
        });
    }
    let all: Vec<(ObstacleClass, &ConvexPolytope)> = map.obstacles().collect();
    for (i, (_, p)) in all.iter().enumerate() {
        if p.num_faces() < 3 || p.area() <= 0.0 || p.normals.len() != p.vertices.len() {
            out.push(Diagnostic {
                indices: vec![i],
                message: format!("polygon {i} is degenerate"),
            });
        }
    }
    for i in 0..map.crop_rows.len() {
        for j in i + 1..map.crop_rows.len() {
            if intersects(&map.crop_rows[i], &map.crop_rows[j]) {
                out.push(Diagnostic {
                    indices: vec![i, j],
                    message: format!("crop rows {i} and {j} overlap"),
                });
            }
        }
    }
    for e in &map.row_endpoints {
        let back = (e.exit.theta - e.entry.theta).abs();
        if e.exit.position().distance(e.entry.position()) > 1e-9
            || (back - std::f64::consts::PI).abs() > 1e-9
        {
            out.push(Diagnostic {
                indices: vec![e.row],
                message: format!("lane {} entry and exit poses are not opposite", e.row),
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Scenario documents

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VehicleSpec {
    Preset(String),
    Inline {
        #[serde(default = "inline_name")]
        name: String,
        #[serde(flatten)]
        params: VehicleParams,
    },
}

fn inline_name() -> String {
    "custom".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalDoc {
    #[serde(rename = "D")]
    pub headland_width: f64,
    pub w: f64,
    pub w_tree: f64,
    pub beta_deg: f64,
    pub n_rows: usize,
    pub row_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDoc {
    pub centerline: [Vec2; 2],
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointDoc {
    pub row: usize,
    /// `[x, y, heading_deg]` facing the headland.
    pub exit: [f64; 3],
}

/// The turn a scenario is meant to exercise, as lane indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnDoc {
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DMinOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obstacle: Option<f64>,
}

fn default_thickness() -> f64 {
    0.5
}

fn default_version() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDocument {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle: Option<VehicleSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boundary_polylines: Vec<Vec<Vec2>>,
    #[serde(default = "default_thickness")]
    pub boundary_thickness: f64,
    /// Explicit nontraversable polygons.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boundary_polygons: Vec<Vec<Vec2>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obstacles: Vec<Vec<Vec2>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<RowDoc>,
    /// Crop rows given directly as polygons.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub crop_polygons: Vec<Vec<Vec2>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub row_endpoints: Vec<EndpointDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub typical: Option<TypicalDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_min: Option<DMinOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<TurnDoc>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: Option<String>,
    pub map: FieldMap,
    pub vehicle: VehicleModel,
    pub optimizer: Option<serde_json::Value>,
    pub d_min: DMinOverrides,
    pub turn: Option<TurnDoc>,
}

/// Converts a polyline into one quadrilateral per segment, extruded to the
/// left of the direction of travel.
pub fn polyline_strips(line: &[Vec2], thickness: f64) -> Result<Vec<ConvexPolytope>, GeometryError> {
    let mut out = Vec::new();
    for seg in line.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let e = b - a;
        if e.norm() <= crate::geometry::COINCIDENT_TOL {
            continue;
        }
        let n = e.perp() * (thickness / e.norm());
        out.push(ConvexPolytope::from_ring(&[a, b, b + n, a + n])?);
    }
    Ok(out)
}

fn ring_error(kind: &str, i: usize, e: GeometryError) -> String {
    format!("{kind} {i}: {e}")
}

pub fn parse_scenario(text: &str) -> Result<Scenario, FieldError> {
    let doc: ScenarioDocument =
        serde_json::from_str(text).map_err(|e| FieldError::Parse(e.to_string()))?;
    scenario_from_document(&doc)
}

/// Loads only the map part of a scenario document.
pub fn load_field_map(text: &str) -> Result<FieldMap, FieldError> {
    parse_scenario(text).map(|s| s.map)
}

pub fn scenario_from_document(doc: &ScenarioDocument) -> Result<Scenario, FieldError> {
    if doc.version != 1 {
        return Err(FieldError::Parse(format!("unsupported version {}", doc.version)));
    }
    let vehicle = match &doc.vehicle {
        None => VehicleModel::tractor(),
        Some(VehicleSpec::Preset(name)) => VehicleModel::preset(name)?,
        Some(VehicleSpec::Inline { name, params }) => VehicleModel::from_params(name, params)?,
    };

    let mut errors = Vec::new();
    let mut map = match &doc.typical {
        Some(t) => {
            let spec = TypicalFieldSpec {
                headland_width: t.headland_width,
                row_width: t.w,
                tree_width: t.w_tree,
                beta: t.beta_deg.to_radians(),
                n_rows: t.n_rows,
                row_length: t.row_length,
            };
            build_typical_field_for(&spec, &vehicle)
                .map_err(|e| FieldError::Validation(vec![e.to_string()]))?
        }
        None => FieldMap::default(),
    };

    if !(doc.boundary_thickness > 0.0) {
        errors.push("boundary_thickness must be positive".to_string());
    }
    for (i, line) in doc.boundary_polylines.iter().enumerate() {
        if line.len() < 2 {
            errors.push(format!("boundary polyline {i} needs at least two points"));
            continue;
        }
        match polyline_strips(line, doc.boundary_thickness) {
            Ok(strips) => map.boundary_obstacles.extend(strips),
            Err(e) => errors.push(ring_error("boundary polyline", i, e)),
        }
    }
    for (i, ring) in doc.boundary_polygons.iter().enumerate() {
        match ConvexPolytope::from_ring(ring) {
            Ok(p) => map.boundary_obstacles.push(p),
            Err(e) => errors.push(ring_error("boundary polygon", i, e)),
        }
    }
    for (i, ring) in doc.obstacles.iter().enumerate() {
        match ConvexPolytope::from_ring(ring) {
            Ok(p) => map.static_obstacles.push(p),
            Err(e) => errors.push(ring_error("obstacle", i, e)),
        }
    }
    for (i, row) in doc.rows.iter().enumerate() {
        let [p0, p1] = row.centerline;
        let axis = p1 - p0;
        if axis.norm() <= crate::geometry::COINCIDENT_TOL || !(row.width > 0.0) {
            errors.push(format!("row {i} has zero length or width"));
            continue;
        }
        let n = axis.perp() * (0.5 * row.width / axis.norm());
        match ConvexPolytope::from_ring(&[p0 - n, p1 - n, p1 + n, p0 + n]) {
            Ok(p) => map.crop_rows.push(p),
            Err(e) => errors.push(ring_error("row", i, e)),
        }
    }
    for (i, ring) in doc.crop_polygons.iter().enumerate() {
        match ConvexPolytope::from_ring(ring) {
            Ok(p) => map.crop_rows.push(p),
            Err(e) => errors.push(ring_error("crop polygon", i, e)),
        }
    }

    if !doc.row_endpoints.is_empty() {
        map.row_endpoints = doc
            .row_endpoints
            .iter()
            .map(|e| {
                let exit = Pose2D::new(e.exit[0], e.exit[1], e.exit[2].to_radians());
                RowEndpoint {
                    row: e.row,
                    exit,
                    entry: Pose2D::new(exit.x, exit.y, exit.theta + std::f64::consts::PI),
                }
            })
            .collect();
    } else if doc.typical.is_none() && doc.rows.len() >= 2 {
        map.row_endpoints = lanes_between_rows(&doc.rows, &vehicle);
    }

    if !errors.is_empty() {
        return Err(FieldError::Validation(errors));
    }
    let diags = validate_map(&map);
    if !diags.is_empty() {
        return Err(FieldError::Validation(diags.into_iter().map(|d| d.message).collect()));
    }
    Ok(Scenario {
        name: doc.name.clone(),
        map,
        vehicle,
        optimizer: doc.optimizer.clone(),
        d_min: doc.d_min.unwrap_or_default(),
        turn: doc.turn,
    })
}

/// Lanes midway between consecutive rows, ending at the rows' second
/// centerline point; poses sit half a vehicle length past that end.
fn lanes_between_rows(rows: &[RowDoc], model: &VehicleModel) -> Vec<RowEndpoint> {
    rows.windows(2)
        .enumerate()
        .map(|(k, pair)| {
            let end = (pair[0].centerline[1] + pair[1].centerline[1]) * 0.5;
            let start = (pair[0].centerline[0] + pair[1].centerline[0]) * 0.5;
            let dir = end - start;
            let heading = dir.y.atan2(dir.x);
            let p = end + dir * (POSE_OFFSET * model.length() / dir.norm());
            RowEndpoint {
                row: k,
                exit: Pose2D::new(p.x, p.y, heading),
                entry: Pose2D::new(p.x, p.y, heading + std::f64::consts::PI),
            }
        })
        .collect()
}

/// Writes a document that reloads to the same scenario. Every polygon is
/// emitted explicitly.
pub fn scenario_to_document(s: &Scenario) -> ScenarioDocument {
    let preset_matches = VehicleModel::preset(&s.vehicle.name)
        .map(|p| p == s.vehicle)
        .unwrap_or(false);
    let vehicle = if preset_matches {
        VehicleSpec::Preset(s.vehicle.name.clone())
    } else {
        VehicleSpec::Inline {
            name: s.vehicle.name.clone(),
            params: s.vehicle.params(),
        }
    };
    let rings = |v: &Vec<ConvexPolytope>| v.iter().map(|p| p.vertices.clone()).collect();
    ScenarioDocument {
        version: 1,
        name: s.name.clone(),
        vehicle: Some(vehicle),
        boundary_polylines: Vec::new(),
        boundary_thickness: default_thickness(),
        boundary_polygons: rings(&s.map.boundary_obstacles),
        obstacles: rings(&s.map.static_obstacles),
        rows: Vec::new(),
        crop_polygons: rings(&s.map.crop_rows),
        row_endpoints: s
            .map
            .row_endpoints
            .iter()
            .map(|e| EndpointDoc {
                row: e.row,
                exit: [e.exit.x, e.exit.y, e.exit.theta.to_degrees()],
            })
            .collect(),
        typical: None,
        optimizer: s.optimizer.clone(),
        d_min: (s.d_min != DMinOverrides::default()).then_some(s.d_min),
        turn: s.turn,
    }
}

pub fn serialize_scenario(s: &Scenario) -> String {
    serde_json::to_string_pretty(&scenario_to_document(s)).expect("scenario serializes")
}
