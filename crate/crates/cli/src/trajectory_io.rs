//! Trajectory JSON: `{dt, states, controls, origin, vehicle, certificate}`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use headland_core::field::VehicleSpec;
use headland_core::optimizer::CertificateReport;
use headland_core::vehicle::{ControlInput, Trajectory, TrajectoryOrigin, VehicleModel, VehicleState};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub dt: f64,
    /// `[x, y, theta, v, phi]` per step.
    pub states: Vec<[f64; 5]>,
    /// `[a, dphi]` per step.
    pub controls: Vec<[f64; 2]>,
    pub origin: TrajectoryOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle: Option<VehicleSpec>,
    #[serde(default)]
    pub certificate: Option<serde_json::Value>,
}

/// Preset name when the model equals a preset, inline parameters otherwise.
pub fn vehicle_spec(model: &VehicleModel) -> VehicleSpec {
    match VehicleModel::preset(&model.name) {
        Ok(p) if &p == model => VehicleSpec::Preset(model.name.clone()),
        _ => VehicleSpec::Inline {
            name: model.name.clone(),
            params: model.params(),
        },
    }
}

pub fn vehicle_from_spec(spec: &VehicleSpec) -> Result<VehicleModel> {
    Ok(match spec {
        VehicleSpec::Preset(name) => VehicleModel::preset(name)?,
        VehicleSpec::Inline { name, params } => VehicleModel::from_params(name, params)?,
    })
}

impl TrajectoryFile {
    pub fn new(traj: &Trajectory, model: &VehicleModel, certificate: Option<&CertificateReport>) -> Self {
        Self {
            dt: traj.dt,
            states: traj.states.iter().map(|s| s.to_array()).collect(),
            controls: traj.controls.iter().map(|u| [u.accel, u.steer_rate]).collect(),
            origin: traj.origin,
            vehicle: Some(vehicle_spec(model)),
            certificate: certificate.map(|c| serde_json::to_value(c).expect("certificate serializes")),
        }
    }

    pub fn to_trajectory(&self) -> Result<Trajectory> {
        if !(self.dt > 0.0) {
            bail!("dt must be positive");
        }
        if self.states.is_empty() {
            bail!("trajectory has no states");
        }
        if self.controls.len() + 1 != self.states.len() {
            bail!("{} states need {} controls, found {}", self.states.len(), self.states.len() - 1, self.controls.len());
        }
        let finite = self.states.iter().flatten().chain(self.controls.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            bail!("trajectory contains non-finite values");
        }
        Ok(Trajectory {
            states: self.states.iter().map(|s| VehicleState::from_array(*s)).collect(),
            controls: self.controls.iter().map(|u| ControlInput::new(u[0], u[1])).collect(),
            dt: self.dt,
            origin: self.origin,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes") + "\n"
    }
}

pub fn load_trajectory(path: &Path) -> Result<(TrajectoryFile, Trajectory)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: TrajectoryFile =
        serde_json::from_str(&text).with_context(|| format!("parsing trajectory {}", path.display()))?;
    let traj = file.to_trajectory().with_context(|| format!("invalid trajectory {}", path.display()))?;
    Ok((file, traj))
}
