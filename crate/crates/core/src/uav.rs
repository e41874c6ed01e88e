//! UAV kinematics, flight envelope and rotary-wing propulsion energy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Error, PartialEq)]
pub enum UavError {
    #[error("slot duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("energy model parameter `{0}` must be strictly positive")]
    NonPositiveParameter(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub position: Vec3,
    pub last_action: Vec3,
    pub slot_duration: f64,
}

/// Allowed flight volume (constraints on x, y and z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightEnvelope {
    pub min: Vec3,
    pub max: Vec3,
}

impl FlightEnvelope {
    pub fn from_scenario(s: &ScenarioConfig) -> Self {
        Self {
            min: Vec3::new(s.area_x_min, s.area_y_min, s.alt_min),
            max: Vec3::new(s.area_x_max, s.area_y_max, s.alt_max),
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }

    pub fn clamp(&self, p: Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    /// Maps a point inside the envelope to `[0, 1]³`.
    pub fn normalize(&self, p: Vec3) -> [f64; 3] {
        let n = |v: f64, lo: f64, hi: f64| ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        [
            n(p.x, self.min.x, self.max.x),
            n(p.y, self.min.y, self.max.y),
            n(p.z, self.min.z, self.max.z),
        ]
    }

    pub fn midpoint(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }
}

/// Maps a raw policy output in `[-1, 1]³` to a displacement whose
/// infinity-norm is at most `d_max / √3`, so its 2-norm never exceeds `d_max`.
pub fn scale_action(raw: [f64; 3], d_max: f64) -> Vec3 {
    let s = d_max / 3f64.sqrt();
    Vec3::new(
        raw[0].clamp(-1.0, 1.0) * s,
        raw[1].clamp(-1.0, 1.0) * s,
        raw[2].clamp(-1.0, 1.0) * s,
    )
}

/// Moves the UAV; positions leaving the envelope are clamped and flagged.
pub fn apply_action(state: &UavState, action: Vec3, envelope: &FlightEnvelope) -> (UavState, bool) {
    let target = state.position + action;
    let violated = !envelope.contains(target);
    let position = if violated { envelope.clamp(target) } else { target };
    (
        UavState {
            position,
            last_action: action,
            slot_duration: state.slot_duration,
        },
        violated,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyModel {
    /// Blade profile power in hover, W.
    pub blade_power: f64,
    /// Induced power in hover, W.
    pub induced_power: f64,
    /// Rotor blade tip speed, m/s.
    pub tip_speed: f64,
    /// Mean rotor induced velocity in hover, m/s.
    pub hover_induced_velocity: f64,
    /// Fuselage drag ratio.
    pub drag_ratio: f64,
    pub rotor_solidity: f64,
    /// kg/m³
    pub air_density: f64,
    /// m²
    pub disc_area: f64,
    /// UAV plus IRS, kg.
    pub mass: f64,
    pub gravity: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            blade_power: 199.4,
            induced_power: 88.66,
            tip_speed: 120.0,
            hover_induced_velocity: 4.03,
            drag_ratio: 0.6,
            rotor_solidity: 0.05,
            air_density: 1.225,
            disc_area: 0.53,
            mass: 2.0,
            gravity: 9.8,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<(), UavError> {
        let fields = [
            ("blade_power", self.blade_power),
            ("induced_power", self.induced_power),
            ("tip_speed", self.tip_speed),
            ("hover_induced_velocity", self.hover_induced_velocity),
            ("drag_ratio", self.drag_ratio),
            ("rotor_solidity", self.rotor_solidity),
            ("air_density", self.air_density),
            ("disc_area", self.disc_area),
            ("mass", self.mass),
            ("gravity", self.gravity),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(UavError::NonPositiveParameter(name));
            }
        }
        Ok(())
    }

    /// Propulsion power (W) at horizontal speed `v_h` and vertical speed `v_v`.
    pub fn power(&self, v_h: f64, v_v: f64) -> f64 {
        let v0 = self.hover_induced_velocity;
        let blade = self.blade_power * (1.0 + 3.0 * v_h * v_h / (self.tip_speed * self.tip_speed));
        let v_h2 = v_h * v_h;
        let inner = (1.0 + v_h2 * v_h2 / (4.0 * v0.powi(4))).sqrt() - v_h2 / (2.0 * v0 * v0);
        let induced = self.induced_power * inner.max(0.0).sqrt();
        let parasite = 0.5 * self.drag_ratio * self.air_density * self.rotor_solidity * self.disc_area * v_h.powi(3);
        let climb = self.mass * self.gravity * v_v;
        blade + induced + parasite + climb
    }
}

/// Energy (J) spent flying displacement `action` within one slot of `dt` seconds.
pub fn propulsion_energy(model: &EnergyModel, action: Vec3, dt: f64) -> Result<f64, UavError> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(UavError::NonPositiveDuration(dt));
    }
    let v_h = action.horizontal_norm() / dt;
    let v_v = action.z.abs() / dt;
    Ok(model.power(v_h, v_v) * dt)
}
