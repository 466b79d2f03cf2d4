//! Standalone SVG output: field maps with trajectory overlays, sweep
//! heatmaps and tracking overlays.

use std::fmt::Write;

use headland_core::collision::CollisionChecker;
use headland_core::field::FieldMap;
use headland_core::geometry::{Pose2D, Vec2};
use headland_core::vehicle::{footprint_at, VehicleModel};

const PX_PER_M: f64 = 40.0;
/// Arc length between drawn footprints.
pub const FOOTPRINT_SPACING: f64 = 0.5;

pub struct Canvas {
    min: Vec2,
    max: Vec2,
    scale: f64,
    body: String,
}

impl Canvas {
    pub fn new(min: Vec2, max: Vec2, scale: f64) -> Self {
        Self {
            min,
            max,
            scale,
            body: String::new(),
        }
    }

    fn px(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.min.x) * self.scale, (self.max.y - p.y) * self.scale)
    }

    fn points(&self, pts: &[Vec2]) -> String {
        pts.iter()
            .map(|p| {
                let (x, y) = self.px(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn polygon(&mut self, pts: &[Vec2], fill: &str, stroke: &str, opacity: f64) {
        let pts = self.points(pts);
        let _ = writeln!(
            self.body,
            r#"<polygon points="{pts}" fill="{fill}" fill-opacity="{opacity}" stroke="{stroke}" stroke-width="1"/>"#
        );
    }

    pub fn polyline(&mut self, pts: &[Vec2], stroke: &str, width: f64, dashed: bool) {
        let pts = self.points(pts);
        let dash = if dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{width}"{dash}/>"#
        );
    }

    pub fn text(&mut self, at: Vec2, size: f64, label: &str) {
        let (x, y) = self.px(at);
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="{size}">{}</text>"#,
            escape(label)
        );
    }

    pub fn finish(self) -> String {
        let w = (self.max.x - self.min.x) * self.scale;
        let h = (self.max.y - self.min.y) * self.scale;
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.2} {h:.2}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A pose sequence drawn as a line with footprint snapshots.
pub struct Overlay<'a> {
    pub label: &'a str,
    pub poses: Vec<Pose2D>,
    pub colour: &'a str,
    pub dashed: bool,
    pub footprints: bool,
}

fn expand(lo: &mut Vec2, hi: &mut Vec2, p: Vec2) {
    *lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
    *hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
}

/// Poses spaced at least [`FOOTPRINT_SPACING`] apart in arc length, plus
/// both ends.
pub fn footprint_poses(poses: &[Pose2D]) -> Vec<Pose2D> {
    let mut out = Vec::new();
    let mut since = f64::INFINITY;
    for (i, p) in poses.iter().enumerate() {
        if i > 0 {
            since += p.position().distance(poses[i - 1].position());
        }
        if since >= FOOTPRINT_SPACING || i + 1 == poses.len() {
            out.push(*p);
            since = 0.0;
        }
    }
    out
}

/// Map with overlays. The view covers the overlays and lane poses with a
/// margin, or the whole map when there is nothing to frame.
pub fn render_plan(map: &FieldMap, model: &VehicleModel, overlays: &[Overlay]) -> String {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for o in overlays {
        for p in &o.poses {
            expand(&mut lo, &mut hi, p.position());
        }
    }
    if lo.x.is_finite() {
        for e in &map.row_endpoints {
            expand(&mut lo, &mut hi, e.exit.position());
        }
        let pad = Vec2::new(5.0, 5.0);
        lo = lo - pad;
        hi = hi + pad;
    } else {
        let (l, h) = map.bounds();
        if l.x.is_finite() {
            (lo, hi) = (l, h);
        } else {
            (lo, hi) = (Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0));
        }
    }
    let mut c = Canvas::new(lo, hi, PX_PER_M);
    draw_map(&mut c, map);
    let checker = CollisionChecker::all(map, model, 0.0);
    for o in overlays {
        if o.footprints {
            for pose in footprint_poses(&o.poses) {
                let hit = checker.collides(&pose);
                for body in footprint_at(model, &pose) {
                    if hit {
                        c.polygon(&body.vertices, "#e53935", "#b71c1c", 0.45);
                    } else {
                        c.polygon(&body.vertices, o.colour, o.colour, 0.12);
                    }
                }
            }
        }
        let pts: Vec<Vec2> = o.poses.iter().map(|p| p.position()).collect();
        c.polyline(&pts, o.colour, 2.0, o.dashed);
    }
    for (i, o) in overlays.iter().enumerate() {
        let at = Vec2::new(lo.x + 0.3, hi.y - 0.6 - 0.5 * i as f64);
        c.polyline(&[at, at + Vec2::new(0.8, 0.0)], o.colour, 2.0, o.dashed);
        c.text(at + Vec2::new(1.0, -0.1), 12.0, o.label);
    }
    c.finish()
}

pub fn draw_map(c: &mut Canvas, map: &FieldMap) {
    for p in &map.boundary_obstacles {
        c.polygon(&p.vertices, "#8d6e63", "#5d4037", 0.6);
    }
    for p in &map.crop_rows {
        c.polygon(&p.vertices, "#66bb6a", "#2e7d32", 0.7);
    }
    for p in &map.static_obstacles {
        c.polygon(&p.vertices, "#546e7a", "#263238", 0.7);
    }
    for e in &map.row_endpoints {
        let p = e.exit.position();
        c.polyline(&[p, p + e.exit.heading() * 0.6], "#1e88e5", 1.5, false);
    }
}

/// One coloured cell of a β × D grid; `None` leaves it blank.
pub struct GridCell {
    pub column: usize,
    pub row: usize,
    pub fill: Option<String>,
    pub label: Option<String>,
}

/// Heatmap with β along x and D along y (growing upward).
pub fn render_grid(title: &str, betas: &[f64], ds: &[f64], cells: &[GridCell]) -> String {
    let cell = 36.0;
    let (left, top) = (60.0, 40.0);
    let w = left + cell * betas.len() as f64 + 20.0;
    let h = top + cell * ds.len() as f64 + 50.0;
    let mut body = String::new();
    let _ = writeln!(
        body,
        r#"<text x="{left}" y="24" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    );
    let y_of = |row: usize| top + cell * (ds.len() - 1 - row) as f64;
    for gc in cells {
        let x = left + cell * gc.column as f64;
        let y = y_of(gc.row);
        let fill = gc.fill.as_deref().unwrap_or("none");
        let _ = writeln!(
            body,
            r##"<rect x="{x:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="{fill}" stroke="#9e9e9e"/>"##
        );
        if let Some(l) = &gc.label {
            let _ = writeln!(
                body,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="9" text-anchor="middle">{}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 3.0,
                escape(l)
            );
        }
    }
    for (i, b) in betas.iter().enumerate() {
        let _ = writeln!(
            body,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="9" text-anchor="middle">{b}</text>"#,
            left + cell * (i as f64 + 0.5),
            top + cell * ds.len() as f64 + 14.0
        );
    }
    for (j, d) in ds.iter().enumerate() {
        let _ = writeln!(
            body,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="9" text-anchor="end">{d}</text>"#,
            left - 6.0,
            y_of(j) + cell / 2.0 + 3.0
        );
    }
    let _ = writeln!(
        body,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">beta (deg)</text>"#,
        left + cell * betas.len() as f64 / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        body,
        r#"<text x="14" y="{:.1}" font-family="sans-serif" font-size="11">D (m)</text>"#,
        top - 6.0
    );
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.1} {h:.1}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}
