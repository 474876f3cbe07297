//! Experiment configuration files.
//!
//! A config is a TOML document with one table per subsystem:
//!
//! ```toml
//! name = "headline"
//!
//! [radar]
//! sweep_bandwidth_hz = 0.96e9
//!
//! [network]
//! vehicles = 70
//!
//! [[sweep]]
//! path = "network.vehicles"
//! values = [10, 30, 50, 70]
//! ```
//!
//! Every table and field is optional and falls back to its default, but
//! unknown keys are rejected.

use std::path::Path;

use coexist_core::analytic::InterferenceGeometry;
use coexist_core::engine::ScenarioConfig;
use coexist_core::phy::PhyConfig;
use coexist_core::waveform::{CommConfig, RadarWaveformConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Positions and velocities used by the closed-form report and the PHY demos.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub target_range_m: f64,
    pub target_velocity_mps: f64,
    pub interferer_range_m: f64,
    pub interferer_velocity_mps: f64,
    /// Start of the interferer's first chirp relative to the victim's (s).
    pub interferer_delay_s: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            target_range_m: 100.0,
            target_velocity_mps: 30.0,
            interferer_range_m: 100.0,
            interferer_velocity_mps: 30.0,
            interferer_delay_s: 0.0,
        }
    }
}

impl GeometryConfig {
    pub fn interference(&self, alpha_d: f64) -> InterferenceGeometry {
        InterferenceGeometry {
            d: self.target_range_m,
            d_i: self.interferer_range_m,
            v: self.target_velocity_mps,
            v_i: self.interferer_velocity_mps,
            alpha_d,
        }
    }
}

/// Settings of the `phy-demo` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoConfig {
    pub seed: u64,
    /// Carrier of the communication link in the ROC demo (Hz).
    pub roc_comm_carrier_hz: f64,
    pub roc_distances_m: Vec<f64>,
    pub roc_pfa: Vec<f64>,
    /// Carrier of the communication link in the SER demo (Hz); must fall
    /// inside the radar sweep for interference to occur.
    pub ser_comm_carrier_hz: f64,
    pub ser_snr_db: Vec<f64>,
    /// Signal-to-radar-interference ratio of the SER demo (linear).
    pub ser_sir: f64,
    pub ser_symbols: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            roc_comm_carrier_hz: 77.5e9,
            roc_distances_m: vec![10.0, 25.0, 50.0, 100.0],
            roc_pfa: vec![1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
            ser_comm_carrier_hz: 77.8e9,
            ser_snr_db: vec![5.0, 10.0, 15.0, 20.0],
            ser_sir: 1.0,
            ser_symbols: 200_000,
        }
    }
}

/// One swept parameter: a dotted path into the config and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<toml::Value>,
}

/// Axis assignments of one sweep point and the resulting config.
pub type SweepPoint = (Vec<(String, toml::Value)>, ExperimentConfig);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub radar: RadarWaveformConfig,
    pub comm: CommConfig,
    pub network: ScenarioConfig,
    pub phy: PhyConfig,
    pub geometry: GeometryConfig,
    pub demo: DemoConfig,
    pub sweep: Vec<SweepAxis>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            radar: RadarWaveformConfig::default(),
            comm: CommConfig::default(),
            network: ScenarioConfig::default(),
            phy: PhyConfig::default(),
            geometry: GeometryConfig::default(),
            demo: DemoConfig::default(),
            sweep: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> Result<String, CliError> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.radar.validate()?;
        self.comm.validate(&self.radar)?;
        self.network.validate()?;
        self.phy.validate()?;
        self.network.legacy_radar(&self.radar).validate()?;
        if self.network.seed > i64::MAX as u64 {
            return Err(CliError::Config(format!("network.seed must not exceed {}", i64::MAX)));
        }
        for axis in &self.sweep {
            if axis.values.is_empty() {
                return Err(CliError::Config(format!("sweep over {} has no values", axis.path)));
            }
            if axis.path.starts_with("sweep") {
                return Err(CliError::Config("a sweep cannot vary the sweep itself".into()));
            }
            let mut probe = self.clone();
            probe.sweep.clear();
            probe.set(&axis.path, axis.values[0].clone())?;
        }
        Ok(())
    }

    /// Replaces the field at a dotted `path`. The path must name an existing field.
    pub fn set(&mut self, path: &str, value: toml::Value) -> Result<(), CliError> {
        let mut doc = toml::Value::try_from(&*self)
            .map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))?;
        let mut slot = &mut doc;
        for key in path.split('.') {
            slot = slot
                .as_table_mut()
                .and_then(|t| t.get_mut(key))
                .ok_or_else(|| CliError::Config(format!("unknown config path {path}")))?;
        }
        *slot = match (&*slot, value) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        let next: Self = doc
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("{path}: {}", e.message())))?;
        *self = next;
        Ok(())
    }

    /// Cartesian product of all sweep axes, first axis outermost. Each
    /// point is the base config with the axis values applied and no sweep.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>, CliError> {
        let mut base = self.clone();
        base.sweep.clear();
        let mut points = vec![(Vec::new(), base)];
        for axis in &self.sweep {
            let mut next = Vec::with_capacity(points.len() * axis.values.len());
            for (assignments, cfg) in &points {
                for v in &axis.values {
                    let mut c: ExperimentConfig = cfg.clone();
                    c.set(&axis.path, v.clone())?;
                    let mut a: Vec<(String, toml::Value)> = assignments.clone();
                    a.push((axis.path.clone(), v.clone()));
                    next.push((a, c));
                }
            }
            points = next;
        }
        for (_, cfg) in &points {
            cfg.validate()?;
        }
        Ok(points)
    }
}

/// Parses `a.b=1,2,3` into a sweep axis; values are read as TOML literals.
pub fn parse_axis(spec: &str) -> Result<SweepAxis, CliError> {
    let (path, list) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("sweep axis {spec:?} is not of the form path=v1,v2")))?;
    let values = list
        .split(',')
        .map(|v| {
            let wrapped = format!("v = {}", v.trim());
            toml::from_str::<toml::Table>(&wrapped)
                .ok()
                .and_then(|mut t| t.remove("v"))
                .ok_or_else(|| CliError::Config(format!("cannot parse sweep value {v:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepAxis { path: path.trim().to_string(), values })
}
