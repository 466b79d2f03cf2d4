//! The β × D feasibility sweep over typical fields.

use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use headland_core::field::{build_typical_field_for, TypicalFieldSpec};
use headland_core::pipeline::{classic_rows, plan_rows, PlanStatus, PlannerConfig};
use headland_core::vehicle::VehicleModel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::render::{render_grid, GridCell};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Range {
    pub fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    /// Inclusive values, rounded to 1e-9 so that labels stay clean.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((self.min + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }

    /// Parses `min:max:step` or a single value.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("bad range {s:?}"))?;
        match parts.as_slice() {
            [v] => Ok(Self::new(*v, *v, 1.0)),
            [a, b, c] => Ok(Self::new(*a, *b, *c)),
            _ => bail!("range must be min:max:step or a single value, got {s:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Planners {
    pub classic: bool,
    pub ours: bool,
}

impl Planners {
    pub fn parse(s: &str) -> Result<Self> {
        let mut p = Planners { classic: false, ours: false };
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match name {
                "classic" => p.classic = true,
                "ours" => p.ours = true,
                other => bail!("unknown planner {other:?}; expected classic and/or ours"),
            }
        }
        if !p.classic && !p.ours {
            bail!("no planner selected");
        }
        Ok(p)
    }
}

impl Default for Planners {
    fn default() -> Self {
        Self { classic: true, ours: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub beta_range: Range,
    #[serde(rename = "D_range")]
    pub d_range: Range,
    pub skip_rows: usize,
    pub vehicle: String,
    pub timeout_s: f64,
    #[serde(default)]
    pub planners: Planners,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            beta_range: Range::new(-25.0, 25.0, 2.5),
            d_range: Range::new(4.0, 10.0, 0.25),
            skip_rows: 3,
            vehicle: "tractor".into(),
            timeout_s: 20.0,
            planners: Planners::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("beta", &self.beta_range), ("D", &self.d_range)] {
            if !(r.step > 0.0) || !(r.max >= r.min) {
                bail!("{name} range needs step > 0 and max >= min");
            }
        }
        if !(self.timeout_s > 0.0) {
            bail!("timeout must be positive");
        }
        if self.skip_rows == 0 {
            bail!("skip_rows must be at least 1");
        }
        VehicleModel::preset(&self.vehicle)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub beta: f64,
    pub d: f64,
    pub classic_feasible: Option<bool>,
    pub ours_feasible: Option<bool>,
    pub stage1_s: Option<f64>,
    pub stage2_s: Option<f64>,
    pub path_length_m: Option<f64>,
    pub timed_out: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellColour {
    /// Neither planner succeeds.
    Red,
    /// Only ours succeeds.
    Yellow,
    /// Both succeed.
    Green,
    /// Only the classic planner succeeds, which the fallback rules out.
    ClassicOnly,
}

impl CellResult {
    pub fn colour(&self) -> Option<CellColour> {
        match (self.classic_feasible?, self.ours_feasible?) {
            (false, false) => Some(CellColour::Red),
            (false, true) => Some(CellColour::Yellow),
            (true, true) => Some(CellColour::Green),
            (true, false) => Some(CellColour::ClassicOnly),
        }
    }
}

impl CellColour {
    pub fn fill(self) -> &'static str {
        match self {
            CellColour::Red => "#e53935",
            CellColour::Yellow => "#fdd835",
            CellColour::Green => "#43a047",
            CellColour::ClassicOnly => "#8e24aa",
        }
    }
}

/// Lanes 0 and `skip_rows` of a typical field with enough rows for both.
pub fn cell_field(spec: &SweepSpec, beta: f64, d: f64, model: &VehicleModel) -> Result<headland_core::field::FieldMap> {
    let field = TypicalFieldSpec {
        n_rows: (spec.skip_rows + 2).max(6),
        ..TypicalFieldSpec::new(d, beta)
    };
    Ok(build_typical_field_for(&field, model)?)
}

pub fn run_cell(spec: &SweepSpec, beta: f64, d: f64) -> Result<CellResult> {
    let model = VehicleModel::preset(&spec.vehicle)?;
    let map = cell_field(spec, beta, d, &model)?;
    let (from, to) = (0, spec.skip_rows);
    let classic_feasible = spec
        .planners
        .classic
        .then(|| classic_rows(&map, from, to, &model).is_some_and(|c| c.feasible));
    let mut cell = CellResult {
        beta,
        d,
        classic_feasible,
        ours_feasible: None,
        stage1_s: None,
        stage2_s: None,
        path_length_m: None,
        timed_out: false,
    };
    if spec.planners.ours {
        let cfg = PlannerConfig {
            timeout_s: spec.timeout_s,
            ..PlannerConfig::default()
        };
        let began = Instant::now();
        let out = plan_rows(&map, from, to, &model, &cfg).context("lane out of range")??;
        cell.ours_feasible = Some(out.status == PlanStatus::Success);
        cell.stage1_s = Some(out.timings.stage1_s);
        cell.stage2_s = Some(out.timings.stage2_s);
        cell.path_length_m = out.path_length();
        cell.timed_out = out.status == PlanStatus::TimedOut || began.elapsed().as_secs_f64() > spec.timeout_s;
    }
    Ok(cell)
}

pub const CSV_HEADER: [&str; 7] = [
    "beta_deg",
    "D_m",
    "classic_feasible",
    "ours_feasible",
    "stage1_s",
    "stage2_s",
    "path_length_m",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn csv_record(c: &CellResult) -> [String; 7] {
    [
        c.beta.to_string(),
        c.d.to_string(),
        opt(c.classic_feasible),
        opt(c.ours_feasible),
        opt(c.stage1_s.map(|t| format!("{t:.4}"))),
        opt(c.stage2_s.map(|t| format!("{t:.4}"))),
        opt(c.path_length_m.map(|l| format!("{l:.4}"))),
    ]
}

pub fn write_csv(path: &Path, cells: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(CSV_HEADER)?;
    for c in cells {
        w.write_record(csv_record(c))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every cell on `jobs` worker threads (0 picks the core count).
/// Each finished cell is appended to `partial` immediately so that an
/// interrupted sweep keeps what it computed; the returned cells are in
/// (β, D) order regardless of completion order.
pub fn run_sweep(spec: &SweepSpec, jobs: usize, partial: Option<&Path>, verbose: bool) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let betas = spec.beta_range.values();
    let ds = spec.d_range.values();
    let grid: Vec<(usize, f64, f64)> = betas
        .iter()
        .flat_map(|b| ds.iter().map(move |d| (*b, *d)))
        .enumerate()
        .map(|(i, (b, d))| (i, b, d))
        .collect();
    let sink = match partial {
        Some(p) => {
            let mut w = csv::Writer::from_path(p).with_context(|| format!("writing {}", p.display()))?;
            w.write_record(CSV_HEADER)?;
            w.flush()?;
            Some(Mutex::new(w))
        }
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let mut results: Vec<(usize, CellResult)> = pool.install(|| {
        grid.par_iter()
            .map(|&(i, b, d)| {
                let cell = run_cell(spec, b, d)?;
                if verbose {
                    eprintln!("beta {b} D {d}: classic {:?} ours {:?}", cell.classic_feasible, cell.ours_feasible);
                }
                if let Some(sink) = &sink {
                    let mut w = sink.lock().expect("csv sink");
                    w.write_record(csv_record(&cell))?;
                    w.flush()?;
                }
                Ok((i, cell))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    results.sort_by_key(|(i, _)| *i);
    Ok(results.into_iter().map(|(_, c)| c).collect())
}

fn grid_index(values: &[f64], v: f64) -> usize {
    values.iter().position(|x| (x - v).abs() < 1e-9).expect("value on grid")
}

/// Feasibility heatmap coloured red, yellow or green per cell.
pub fn feasibility_svg(spec: &SweepSpec, cells: &[CellResult]) -> String {
    let (betas, ds) = (spec.beta_range.values(), spec.d_range.values());
    let grid: Vec<GridCell> = cells
        .iter()
        .map(|c| GridCell {
            column: grid_index(&betas, c.beta),
            row: grid_index(&ds, c.d),
            fill: c.colour().map(|k| k.fill().to_string()),
            label: None,
        })
        .collect();
    render_grid("feasibility: red none, yellow ours only, green both", &betas, &ds, &grid)
}

/// Timing heatmap for one stage; cells over the time limit stay blank.
pub fn timing_svg(spec: &SweepSpec, cells: &[CellResult], stage2: bool) -> String {
    let (betas, ds) = (spec.beta_range.values(), spec.d_range.values());
    let time = |c: &CellResult| if stage2 { c.stage2_s } else { c.stage1_s };
    let grid: Vec<GridCell> = cells
        .iter()
        .map(|c| {
            let t = time(c).filter(|_| !c.timed_out);
            GridCell {
                column: grid_index(&betas, c.beta),
                row: grid_index(&ds, c.d),
                fill: t.map(|t| {
                    let f = (t / spec.timeout_s).clamp(0.0, 1.0);
                    let g = (235.0 - 200.0 * f) as u8;
                    format!("rgb({g},{g},255)")
                }),
                label: t.map(|t| format!("{t:.1}")),
            }
        })
        .collect();
    let title = if stage2 { "stage II time (s)" } else { "stage I time (s)" };
    render_grid(title, &betas, &ds, &grid)
}

pub fn write_outputs(dir: &Path, spec: &SweepSpec, cells: &[CellResult]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("sweep.csv"), cells)?;
    let mut f = std::fs::File::create(dir.join("feasibility.svg"))?;
    f.write_all(feasibility_svg(spec, cells).as_bytes())?;
    std::fs::write(dir.join("stage1_time.svg"), timing_svg(spec, cells, false))?;
    std::fs::write(dir.join("stage2_time.svg"), timing_svg(spec, cells, true))?;
    Ok(())
}
