use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adaptation::AdaptationConfig;
use crate::channel::ChannelConfig;
use crate::dynamics::VehicleParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatoonConfig {
    /// Number of followers `M`; the leader is vehicle 0.
    pub followers: usize,
    /// Desired inter-vehicle distance (m).
    pub spacing: f64,
    /// Cruise speed at t = 0 (m/s).
    pub initial_speed: f64,
    /// Optional initial error `[ep, ev, ea]` per follower; missing entries are zero.
    pub initial_errors: Vec<[f64; 3]>,
}

impl Default for PlatoonConfig {
    fn default() -> Self {
        PlatoonConfig {
            followers: 3,
            spacing: 10.0,
            initial_speed: 25.0,
            initial_errors: Vec::new(),
        }
    }
}

/// Piecewise-constant speed reference executed by the virtual leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Times (s) at which the reference switches.
    pub jump_times: Vec<f64>,
    /// Speed (m/s) after each switch.
    pub speeds: Vec<f64>,
    /// Leader speed-tracking gain (1/s).
    pub leader_kv: f64,
    /// Leader acceleration damping gain.
    pub leader_ka: f64,
    /// Leader command limit (m/s^2).
    pub leader_accel: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            jump_times: vec![8.0],
            speeds: vec![30.0],
            leader_kv: 1.0,
            leader_ka: 1.0,
            leader_accel: 1.0,
        }
    }
}

impl ReferenceConfig {
    /// Commanded speed at time `t`.
    pub fn speed_at(&self, t: f64, initial: f64) -> f64 {
        self.jump_times
            .iter()
            .zip(&self.speeds)
            .rfind(|(&tj, _)| t >= tj)
            .map_or(initial, |(_, &v)| v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Tube shrink factor in (0, 1).
    pub varrho: f64,
    /// Neighbour-consistency level; `None` derives it from the state box.
    pub zeta: Option<f64>,
    /// `epsilon = epsilon_fraction * gamma`.
    pub epsilon_fraction: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            varrho: 0.2,
            zeta: None,
            epsilon_fraction: 0.5,
        }
    }
}

impl ControllerConfig {
    /// `zeta`, defaulting to `|X|^2 lambda_max(Q_coop) / 100` at the baseline weight.
    pub fn zeta_or_default(&self, params: &VehicleParams, q0: f64) -> f64 {
        self.zeta
            .unwrap_or_else(|| params.state_radius().powi(2) * 0.5 * q0 * 1e-2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// Total simulated time (s).
    pub t_all: f64,
    pub seed: u64,
    pub platoon: PlatoonConfig,
    pub reference: ReferenceConfig,
    pub vehicle: VehicleParams,
    pub channel: ChannelConfig,
    pub adaptation: AdaptationConfig,
    pub controller: ControllerConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            t_all: 30.0,
            seed: 0,
            platoon: PlatoonConfig::default(),
            reference: ReferenceConfig::default(),
            vehicle: VehicleParams::default(),
            channel: ChannelConfig::default(),
            adaptation: AdaptationConfig::default(),
            controller: ControllerConfig::default(),
        }
    }
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Re-key a parameter error under its section.
fn within(section: &str, res: Result<()>) -> Result<()> {
    res.map_err(|e| match e {
        Error::Parameter { name, reason } => config_err(&format!("{section}.{name}"), reason),
        other => other,
    })
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| config_err("<document>", e.to_string()))?;
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            config_err(&key, e.into_inner().message().to_string())
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("<document>", e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// Number of simulated steps.
    pub fn steps(&self) -> usize {
        (self.t_all / self.vehicle.h).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_all > 0.0 && self.t_all.is_finite()) {
            return Err(config_err("t_all", "must be positive"));
        }
        let p = &self.platoon;
        if p.followers < 2 {
            return Err(config_err("platoon.followers", "a platoon needs M >= 2"));
        }
        if !(p.spacing > 0.0 && p.spacing.is_finite()) {
            return Err(config_err("platoon.spacing", "must be positive"));
        }
        if !p.initial_speed.is_finite() {
            return Err(config_err("platoon.initial_speed", "must be finite"));
        }
        if p.initial_errors.len() > p.followers {
            return Err(config_err("platoon.initial_errors", "more entries than followers"));
        }
        if p.initial_errors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(config_err("platoon.initial_errors", "must be finite"));
        }
        let r = &self.reference;
        if r.jump_times.len() != r.speeds.len() {
            return Err(config_err("reference.speeds", "need one speed per jump time"));
        }
        if r.jump_times.iter().any(|&t| !(0.0..=self.t_all).contains(&t)) {
            return Err(config_err("reference.jump_times", "must lie within [0, t_all]"));
        }
        if r.jump_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(config_err("reference.jump_times", "must be sorted"));
        }
        if r.speeds.iter().any(|v| !v.is_finite()) {
            return Err(config_err("reference.speeds", "must be finite"));
        }
        for (key, v) in [("reference.leader_kv", r.leader_kv), ("reference.leader_ka", r.leader_ka), ("reference.leader_accel", r.leader_accel)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(key, "must be positive"));
            }
        }
        within("vehicle", self.vehicle.validate())?;
        within("channel", self.channel.validate())?;
        within("adaptation", self.adaptation.validate())?;
        let c = &self.controller;
        if !(c.varrho > 0.0 && c.varrho < 1.0) {
            return Err(config_err("controller.varrho", "must lie in (0, 1)"));
        }
        if let Some(z) = c.zeta {
            if !(z > 0.0 && z.is_finite()) {
                return Err(config_err("controller.zeta", "must be positive"));
            }
        }
        if !(c.epsilon_fraction > 0.0 && c.epsilon_fraction < 1.0) {
            return Err(config_err("controller.epsilon_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }
}
