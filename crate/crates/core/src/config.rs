//! Run and experiment configuration. A config file is a single JSON object
//! whose keys are flat dotted names (`"hazard.spread_probability": 0.25`);
//! unknown keys and out-of-range values are hard errors so typos never
//! silently fall back to defaults.

use crate::building::NodeId;
use crate::comms::{CommsMode, CommsParams};
use crate::cpn::CpnParams;
use crate::energy::{BatteryParams, Direction, EnergyModel, LinkMode};
use crate::hazard::{HazardParams, IgnitionSpec};
use crate::rnn::RnnParams;
use crate::sim::{Algorithm, SimParams};
use crate::spf::SpfParams;
use serde_json::Value;
use std::collections::BTreeSet;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config root must be a JSON object of dotted keys")]
    NotAnObject,
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("config key '{key}' expects {expected}")]
    BadValue { key: String, expected: &'static str },
    #[error("config key '{key}' is invalid: {reason}")]
    Invalid { key: String, reason: String },
}

/// Every tunable of a single simulation run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    pub hazard: HazardParams,
    pub spf: SpfParams,
    pub rnn: RnnParams,
    pub cpn: CpnParams,
    pub energy: EnergyModel,
    pub battery: BatteryParams,
    pub comms: CommsParams,
    pub sim: SimParams,
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
    v.as_f64().ok_or(ConfigError::BadValue {
        key: key.to_string(),
        expected: "a number",
    })
}

fn as_u64(key: &str, v: &Value) -> Result<u64, ConfigError> {
    v.as_u64().ok_or(ConfigError::BadValue {
        key: key.to_string(),
        expected: "a non-negative integer",
    })
}

fn as_u32(key: &str, v: &Value) -> Result<u32, ConfigError> {
    as_u64(key, v)?.try_into().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        expected: "an integer that fits in 32 bits",
    })
}

fn as_bool(key: &str, v: &Value) -> Result<bool, ConfigError> {
    v.as_bool().ok_or(ConfigError::BadValue {
        key: key.to_string(),
        expected: "a boolean",
    })
}

fn as_str<'v>(key: &str, v: &'v Value) -> Result<&'v str, ConfigError> {
    v.as_str().ok_or(ConfigError::BadValue {
        key: key.to_string(),
        expected: "a string",
    })
}

fn as_array<'v>(key: &str, v: &'v Value) -> Result<&'v Vec<Value>, ConfigError> {
    v.as_array().ok_or(ConfigError::BadValue {
        key: key.to_string(),
        expected: "an array",
    })
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn check_unit(key: &str, x: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(invalid(key, format!("{x} is outside [0, 1]")))
    }
}

fn check_positive(key: &str, x: f64) -> Result<f64, ConfigError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(key, format!("{x} is not a positive finite number")))
    }
}

fn check_non_negative(key: &str, x: f64) -> Result<f64, ConfigError> {
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(invalid(key, format!("{x} is not a non-negative finite number")))
    }
}

impl Params {
    /// Parse a config file's text and overlay it onto these parameters.
    pub fn apply_config_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let root: Value = serde_json::from_str(text)?;
        let map = root.as_object().ok_or(ConfigError::NotAnObject)?;
        for (key, value) in map {
            self.apply_key(key, value)?;
        }
        Ok(())
    }

    /// Set one dotted key. Rejects unknown keys and invalid values.
    pub fn apply_key(&mut self, key: &str, value: &Value) -> Result<(), ConfigError> {
        match key {
            "hazard.spread_probability" => {
                self.hazard.spread_probability = check_unit(key, as_f64(key, value)?)?;
            }
            "hazard.spread_tick_s" => {
                self.hazard.spread_tick_s = check_positive(key, as_f64(key, value)?)?;
            }
            "hazard.sensing_delay_s" => {
                self.hazard.sensing_delay_s = check_non_negative(key, as_f64(key, value)?)?;
            }
            "hazard.ignition_node" => {
                self.hazard.ignition = match value {
                    Value::String(s) if s == "random" => IgnitionSpec::Random,
                    Value::String(s) if s == "none" => IgnitionSpec::None,
                    Value::Number(_) => IgnitionSpec::Node(NodeId(as_u32(key, value)?)),
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            expected: "\"random\", \"none\", or a node id",
                        })
                    }
                };
            }
            "spf.c1" => self.spf.c1 = check_non_negative(key, as_f64(key, value)?)?,
            "spf.c2" => self.spf.c2 = check_non_negative(key, as_f64(key, value)?)?,
            "spf.sigma1" => self.spf.sigma1 = check_positive(key, as_f64(key, value)?)?,
            "spf.sigma2" => self.spf.sigma2 = check_positive(key, as_f64(key, value)?)?,
            "spf.influence_radius_m" => {
                self.spf.influence_radius_m = check_non_negative(key, as_f64(key, value)?)?;
            }
            "rnn.epsilon" => self.rnn.epsilon = check_unit(key, as_f64(key, value)?)?,
            "rnn.threshold_smoothing_a" => {
                self.rnn.threshold_smoothing_a = check_unit(key, as_f64(key, value)?)?;
            }
            "rnn.fixed_point_tolerance" => {
                self.rnn.fixed_point_tolerance = check_positive(key, as_f64(key, value)?)?;
            }
            "cpn.packets_per_recompute" => {
                self.cpn.packets_per_recompute = as_u32(key, value)?;
            }
            "cpn.hop_limit_factor" => {
                let f = as_u32(key, value)?;
                if f == 0 {
                    return Err(invalid(key, "must be at least 1"));
                }
                self.cpn.hop_limit_factor = f;
            }
            "cpn.congestion_gamma" => {
                self.cpn.congestion_gamma = check_non_negative(key, as_f64(key, value)?)?;
            }
            "cpn.walk_speed_mps" => {
                self.cpn.walk_speed_mps = check_positive(key, as_f64(key, value)?)?;
            }
            "cpn.cache_ttl_s" => {
                self.cpn.cache_ttl_s = check_non_negative(key, as_f64(key, value)?)?;
            }
            "energy.3g_down_j_per_byte" => self.set_coefficient(key, value, LinkMode::ThreeG, Direction::Download)?,
            "energy.3g_up_j_per_byte" => self.set_coefficient(key, value, LinkMode::ThreeG, Direction::Upload)?,
            "energy.bt_down_j_per_byte" => self.set_coefficient(key, value, LinkMode::Bluetooth, Direction::Download)?,
            "energy.bt_up_j_per_byte" => self.set_coefficient(key, value, LinkMode::Bluetooth, Direction::Upload)?,
            "energy.3g_rate_bps" => {
                let r = check_positive(key, as_f64(key, value)?)?;
                self.energy
                    .set_rate_bps(LinkMode::ThreeG, r)
                    .map_err(|e| invalid(key, e.to_string()))?;
            }
            "energy.bt_rate_bps" => {
                let r = check_positive(key, as_f64(key, value)?)?;
                self.energy
                    .set_rate_bps(LinkMode::Bluetooth, r)
                    .map_err(|e| invalid(key, e.to_string()))?;
            }
            "energy.battery_mean_j" => {
                self.battery.mean_j = check_positive(key, as_f64(key, value)?)?;
            }
            "energy.battery_sd_j" => {
                self.battery.sd_j = check_non_negative(key, as_f64(key, value)?)?;
            }
            "energy.battery_min_j" => {
                self.battery.min_j = check_positive(key, as_f64(key, value)?)?;
            }
            "energy.battery_max_j" => {
                self.battery.max_j = check_positive(key, as_f64(key, value)?)?;
            }
            "comms.alpha" => self.comms.alpha = check_positive(key, as_f64(key, value)?)?,
            "comms.bluetooth_range_m" => {
                self.comms.bluetooth_range_m = check_positive(key, as_f64(key, value)?)?;
            }
            "comms.smart_packet_bytes" => self.comms.smart_packet_bytes = as_u64(key, value)?,
            "comms.discovery_tick_s" => {
                self.comms.discovery_tick_s = check_positive(key, as_f64(key, value)?)?;
            }
            "comms.photo_bytes" => self.comms.photo_bytes = as_u64(key, value)?,
            "comms.instruction_bytes" => self.comms.instruction_bytes = as_u64(key, value)?,
            "comms.fallback_to_3g" => self.comms.fallback_to_3g = as_bool(key, value)?,
            "sim.step_s" => self.sim.step_s = check_positive(key, as_f64(key, value)?)?,
            "sim.max_steps" => self.sim.max_steps = as_u32(key, value)?,
            "sim.p_spf" => self.sim.p_spf = check_unit(key, as_f64(key, value)?)?,
            "sim.walk_speed_mps" => {
                let v = check_positive(key, as_f64(key, value)?)?;
                self.sim.walk_speed_mps = v;
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        self.validate_cross_fields(key)
    }

    fn set_coefficient(
        &mut self,
        key: &str,
        value: &Value,
        mode: LinkMode,
        direction: Direction,
    ) -> Result<(), ConfigError> {
        let c = check_non_negative(key, as_f64(key, value)?)?;
        self.energy
            .set_coefficient_j_per_byte(mode, direction, c)
            .map_err(|e| invalid(key, e.to_string()))
    }

    fn validate_cross_fields(&self, key: &str) -> Result<(), ConfigError> {
        let b = &self.battery;
        if key.starts_with("energy.battery") {
            if b.min_j > b.max_j {
                return Err(invalid(key, format!("battery_min_j {} > battery_max_j {}", b.min_j, b.max_j)));
            }
            if !(b.min_j..=b.max_j).contains(&b.mean_j) {
                return Err(invalid(
                    key,
                    format!("battery_mean_j {} outside [{}, {}]", b.mean_j, b.min_j, b.max_j),
                ));
            }
        }
        Ok(())
    }
}

/// An experiment: the cross product of evacuee counts, navigation
/// algorithms, comms modes, and seeds over one building.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: Params,
    pub building: Option<PathBuf>,
    pub counts: Vec<u32>,
    pub algorithms: Vec<Algorithm>,
    pub comms_modes: Vec<CommsMode>,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            params: Params::default(),
            building: None,
            counts: vec![30, 60, 90, 120],
            algorithms: vec![Algorithm::Dijkstra, Algorithm::Cpnst, Algorithm::CpnSpf],
            comms_modes: vec![CommsMode::Direct3g, CommsMode::Ahcpn],
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl ExperimentConfig {
    /// Parse a config file holding both module keys and `experiment.*` keys.
    pub fn from_config_text(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let root: Value = serde_json::from_str(text)?;
        let map = root.as_object().ok_or(ConfigError::NotAnObject)?;
        for (key, value) in map {
            match key.as_str() {
                "experiment.building" => {
                    cfg.building = Some(PathBuf::from(as_str(key, value)?));
                }
                "experiment.counts" => {
                    let arr = as_array(key, value)?;
                    cfg.counts = arr.iter().map(|v| as_u32(key, v)).collect::<Result<_, _>>()?;
                    if cfg.counts.is_empty() {
                        return Err(invalid(key, "list must not be empty"));
                    }
                }
                "experiment.algorithms" => {
                    let arr = as_array(key, value)?;
                    cfg.algorithms = arr
                        .iter()
                        .map(|v| {
                            as_str(key, v)?
                                .parse::<Algorithm>()
                                .map_err(|reason| invalid(key, reason))
                        })
                        .collect::<Result<_, _>>()?;
                    if cfg.algorithms.is_empty() {
                        return Err(invalid(key, "list must not be empty"));
                    }
                }
                "experiment.comms_modes" => {
                    let arr = as_array(key, value)?;
                    cfg.comms_modes = arr
                        .iter()
                        .map(|v| {
                            as_str(key, v)?
                                .parse::<CommsMode>()
                                .map_err(|reason| invalid(key, reason))
                        })
                        .collect::<Result<_, _>>()?;
                    if cfg.comms_modes.is_empty() {
                        return Err(invalid(key, "list must not be empty"));
                    }
                }
                "experiment.seeds" => {
                    let arr = as_array(key, value)?;
                    cfg.seeds = arr.iter().map(|v| as_u64(key, v)).collect::<Result<_, _>>()?;
                    if cfg.seeds.is_empty() {
                        return Err(invalid(key, "list must not be empty"));
                    }
                    let unique: BTreeSet<u64> = cfg.seeds.iter().copied().collect();
                    if unique.len() != cfg.seeds.len() {
                        return Err(invalid(key, "seeds must be distinct"));
                    }
                }
                module_key => cfg.params.apply_key(module_key, value)?,
            }
        }
        Ok(cfg)
    }
}
