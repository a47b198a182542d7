//! The serialised parameter set consumed by the simulator.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::latency::LatencyModel;
use super::tables::{EventProbTable, IntensityTable, StationaryDist, VolumeDist};
use super::timing::TimingModel;
use super::CalibrationError;
use crate::book::DEPTH;
use crate::impact::{ImpactParams, KernelSpec};

pub const BUNDLE_VERSION: &str = "qrlob-bundle/1";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// First and last timestamps of the calibration data.
    pub data_window_ns: Option<(u64, u64)>,
    pub event_count: u64,
    pub sessions: u64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBundle {
    pub version: String,
    pub mes: [u32; DEPTH],
    pub event_probs: EventProbTable,
    pub intensity: IntensityTable,
    pub volumes: VolumeDist,
    pub stationary: StationaryDist,
    pub timing: TimingModel,
    pub latency: LatencyModel,
    pub kernel: KernelSpec,
    pub impact: ImpactParams,
    pub provenance: Provenance,
}

impl ParameterBundle {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.version != BUNDLE_VERSION {
            return Err(CalibrationError::SchemaVersionMismatch { found: self.version.clone() });
        }
        if self.mes.iter().any(|&m| m == 0) {
            return Err(CalibrationError::Invalid("mes must be at least one share".into()));
        }
        self.event_probs.validate()?;
        self.intensity.validate()?;
        self.volumes.validate()?;
        self.latency.validate()?;
        if self.impact.m_plus < 0.0 || self.impact.m_minus < 0.0 {
            return Err(CalibrationError::Invalid("impact multipliers must be nonnegative".into()));
        }
        if self.kernel.weights.len() != self.kernel.rates.len() || self.kernel.weights.iter().any(|w| *w < 0.0) {
            return Err(CalibrationError::Invalid("kernel weights".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, CalibrationError> {
        serde_json::to_string_pretty(self).map_err(|e| CalibrationError::Corrupt(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, CalibrationError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CalibrationError::Corrupt(e.to_string()))?;
        match value.get("version").and_then(|v| v.as_str()) {
            Some(BUNDLE_VERSION) => {}
            Some(other) => return Err(CalibrationError::SchemaVersionMismatch { found: other.to_string() }),
            None => return Err(CalibrationError::Corrupt("missing version".into())),
        }
        let bundle: Self = serde_json::from_value(value).map_err(|e| CalibrationError::Corrupt(e.to_string()))?;
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn save_bundle(bundle: &ParameterBundle, path: &Path) -> Result<(), CalibrationError> {
    let mut text = bundle.to_json()?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<ParameterBundle, CalibrationError> {
    let text = std::fs::read_to_string(path)?;
    ParameterBundle::from_json(&text)
}
