//! System parameters and the JSON configuration file.
//!
//! The file has four optional sections, `system`, `region`, `sensing` and
//! `training`, plus an opaque `scenario` section consumed by the harness.
//! Every field is optional; missing fields take the desk-scale defaults
//! (256-element BS, 4-element UE, 28 GHz, −101 dBm thermal noise, region
//! `[-5, 5] × [2, 25]` m). Unknown keys are rejected.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Region;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Global parameter record shared by every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub carrier_frequency_hz: f64,
    pub wavelength_m: f64,
    pub wavenumber: f64,
    pub n_bs: usize,
    pub n_ue: usize,
    pub antenna_spacing_m: f64,
    pub n_rf_bs: usize,
    pub n_rf_ue: usize,
    pub noise_power_dbm: f64,
    pub pilot_power_dbm: f64,
}

impl SystemConfig {
    /// Half-wavelength arrays, single RF chains, −101 dBm noise, and a pilot
    /// power giving 20 dB per-antenna LoS SNR at the default region center.
    pub fn new(carrier_frequency_hz: f64, n_bs: usize, n_ue: usize) -> Self {
        let wavelength_m = SPEED_OF_LIGHT / carrier_frequency_hz;
        let mut cfg = Self {
            carrier_frequency_hz,
            wavelength_m,
            wavenumber: 2.0 * PI / wavelength_m,
            n_bs,
            n_ue,
            antenna_spacing_m: wavelength_m / 2.0,
            n_rf_bs: 1,
            n_rf_ue: 1,
            noise_power_dbm: -101.0,
            pilot_power_dbm: 0.0,
        };
        cfg.pilot_power_dbm = cfg.pilot_power_for_snr(&Region::default(), DEFAULT_RECEIVE_SNR_DB);
        cfg
    }

    pub fn noise_power_watts(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm)
    }

    pub fn pilot_power_watts(&self) -> f64 {
        dbm_to_watts(self.pilot_power_dbm)
    }

    /// Pilot power (dBm) such that a LoS path from the region center yields
    /// `snr_db` per receive antenna.
    pub fn pilot_power_for_snr(&self, region: &Region, snr_db: f64) -> f64 {
        let d = region.center().norm();
        let path_gain = 1.0 / (d * d);
        let watts = self.noise_power_watts() * 10f64.powf(snr_db / 10.0) / path_gain;
        watts_to_dbm(watts)
    }

    pub fn bs_aperture(&self) -> f64 {
        (self.n_bs as f64 - 1.0) * self.antenna_spacing_m
    }

    pub fn ue_aperture(&self) -> f64 {
        (self.n_ue as f64 - 1.0) * self.antenna_spacing_m
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("system.carrier_frequency_hz", self.carrier_frequency_hz),
            ("system.antenna_spacing_m", self.antenna_spacing_m),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be positive and finite, got {v}")));
            }
        }
        for (key, v) in [
            ("system.n_bs", self.n_bs),
            ("system.n_ue", self.n_ue),
            ("system.n_rf_bs", self.n_rf_bs),
            ("system.n_rf_ue", self.n_rf_ue),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if self.n_rf_bs > self.n_bs {
            return Err(Error::config("system.n_rf_bs", "cannot exceed n_bs"));
        }
        if self.n_rf_ue > self.n_ue {
            return Err(Error::config("system.n_rf_ue", "cannot exceed n_ue"));
        }
        if (self.wavenumber * self.wavelength_m - 2.0 * PI).abs() > 1e-9 {
            return Err(Error::config("system.wavenumber", "wavenumber * wavelength must equal 2π"));
        }
        if self.antenna_spacing_m > self.wavelength_m / 2.0 * (1.0 + 1e-12) {
            return Err(Error::config(
                "system.antenna_spacing_m",
                format!(
                    "spacing {} exceeds half a wavelength ({})",
                    self.antenna_spacing_m,
                    self.wavelength_m / 2.0
                ),
            ));
        }
        for (key, v) in [
            ("system.noise_power_dbm", self.noise_power_dbm),
            ("system.pilot_power_dbm", self.pilot_power_dbm),
        ] {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        Ok(())
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::new(28e9, 256, 4)
    }
}

pub const DEFAULT_RECEIVE_SNR_DB: f64 = 20.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub carrier_frequency_hz: Option<f64>,
    pub n_bs: Option<usize>,
    pub n_ue: Option<usize>,
    pub antenna_spacing_m: Option<f64>,
    pub n_rf_bs: Option<usize>,
    pub n_rf_ue: Option<usize>,
    pub noise_power_dbm: Option<f64>,
    /// Explicit pilot power; when absent it follows `receive_snr_db`.
    pub pilot_power_dbm: Option<f64>,
    pub receive_snr_db: Option<f64>,
}

/// Sensing-stage and localization knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensingParams {
    /// Reference amplitude `A`; `None` derives it from the region's `y_low`.
    pub reference_amplitude: Option<f64>,
    /// Standard deviation of additive Gaussian power-sensor noise (0 = off).
    pub power_noise_std: f64,
    /// Number of y-rows of the search grid.
    pub grid_rows: usize,
    /// Peak threshold relative to the first peak when the path count is unknown.
    pub threshold_rel: f64,
}

impl Default for SensingParams {
    fn default() -> Self {
        Self {
            reference_amplitude: None,
            power_noise_std: 0.0,
            grid_rows: 20,
            threshold_rel: 0.1,
        }
    }
}

impl SensingParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.reference_amplitude {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::config("sensing.reference_amplitude", "must be positive"));
            }
        }
        if !(self.power_noise_std.is_finite() && self.power_noise_std >= 0.0) {
            return Err(Error::config("sensing.power_noise_std", "must be non-negative"));
        }
        if self.grid_rows == 0 {
            return Err(Error::config("sensing.grid_rows", "must be at least 1"));
        }
        if !(self.threshold_rel > 0.0 && self.threshold_rel < 1.0) {
            return Err(Error::config("sensing.threshold_rel", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrMode {
    Noiseless,
    Thermal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingParams {
    /// Pilot length; takes precedence over `compression_ratio`.
    pub tau: Option<i64>,
    pub compression_ratio: Option<f64>,
    pub omp_iterations: usize,
    pub residual_tol: f64,
    pub snr_mode: SnrMode,
}

impl Default for TrainingParams {
    fn default() -> Self {
        Self {
            tau: None,
            compression_ratio: Some(0.3),
            omp_iterations: 30,
            residual_tol: 1e-6,
            snr_mode: SnrMode::Thermal,
        }
    }
}

impl TrainingParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(tau) = self.tau {
            if tau < 1 {
                return Err(Error::config("training.tau", format!("must be at least 1, got {tau}")));
            }
        }
        if let Some(mu) = self.compression_ratio {
            if !(mu.is_finite() && mu > 0.0) {
                return Err(Error::config("training.compression_ratio", "must be positive"));
            }
        }
        if self.omp_iterations == 0 {
            return Err(Error::config("training.omp_iterations", "must be at least 1"));
        }
        if !(self.residual_tol.is_finite() && self.residual_tol >= 0.0) {
            return Err(Error::config("training.residual_tol", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub system: SystemSection,
    pub region: Option<Region>,
    pub sensing: SensingParams,
    pub training: TrainingParams,
    /// Left uninterpreted here; parsed by the experiment harness.
    pub scenario: Option<serde_json::Value>,
}

/// Validated contents of a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub system: SystemConfig,
    pub region: Region,
    pub sensing: SensingParams,
    pub training: TrainingParams,
    pub scenario: Option<serde_json::Value>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self::from_file(ConfigFile::default()).expect("defaults are valid")
    }
}

impl SimulationConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let text = if text.trim().is_empty() { "{}" } else { text };
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        Self::from_file(file)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_file(file: ConfigFile) -> Result<Self> {
        let s = &file.system;
        let region = file.region.unwrap_or_default();
        region
            .validate()
            .map_err(|e| Error::config("region", e.to_string()))?;

        let fc = s.carrier_frequency_hz.unwrap_or(28e9);
        if !(fc.is_finite() && fc > 0.0) {
            return Err(Error::config("system.carrier_frequency_hz", "must be positive"));
        }
        let mut system = SystemConfig::new(fc, s.n_bs.unwrap_or(256), s.n_ue.unwrap_or(4));
        if let Some(v) = s.antenna_spacing_m {
            system.antenna_spacing_m = v;
        }
        if let Some(v) = s.n_rf_bs {
            system.n_rf_bs = v;
        }
        if let Some(v) = s.n_rf_ue {
            system.n_rf_ue = v;
        }
        if let Some(v) = s.noise_power_dbm {
            system.noise_power_dbm = v;
        }
        system.pilot_power_dbm = match s.pilot_power_dbm {
            Some(p) => p,
            None => {
                let snr = s.receive_snr_db.unwrap_or(DEFAULT_RECEIVE_SNR_DB);
                if !snr.is_finite() {
                    return Err(Error::config("system.receive_snr_db", "must be finite"));
                }
                system.pilot_power_for_snr(&region, snr)
            }
        };
        system.validate()?;
        file.sensing.validate()?;
        file.training.validate()?;
        Ok(Self {
            system,
            region,
            sensing: file.sensing,
            training: file.training,
            scenario: file.scenario,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavenumber_invariant() {
        let cfg = SystemConfig::default();
        assert!((cfg.wavenumber * cfg.wavelength_m - 2.0 * PI).abs() < 1e-12);
        assert!((cfg.wavelength_m - SPEED_OF_LIGHT / 28e9).abs() < 1e-15);
        cfg.validate().unwrap();
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = SimulationConfig::from_json_str("").unwrap();
        assert_eq!(cfg.system.n_bs, 256);
        assert_eq!(cfg.system.n_ue, 4);
        assert_eq!(cfg.system.carrier_frequency_hz, 28e9);
        assert_eq!(cfg.system.noise_power_dbm, -101.0);
        assert_eq!(cfg.system.n_rf_bs, 1);
        assert_eq!(cfg.region, Region::default());
    }

    #[test]
    fn negative_tau_names_the_key() {
        let err = SimulationConfig::from_json_str(r#"{"training": {"tau": -4}}"#).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "training.tau"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected_with_path() {
        let err = SimulationConfig::from_json_str(r#"{"system": {"n_bss": 3}}"#).unwrap_err();
        match err {
            Error::Config { key, message } => {
                assert!(key.starts_with("system"), "{key}");
                assert!(message.contains("n_bss"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn oversized_spacing_rejected() {
        let err = SimulationConfig::from_json_str(r#"{"system": {"antenna_spacing_m": 0.01}}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "system.antenna_spacing_m"));
    }

    #[test]
    fn pilot_power_hits_requested_snr() {
        let cfg = SystemConfig::default();
        let region = Region::default();
        let d = region.center().norm();
        let snr = cfg.pilot_power_watts() / (d * d) / cfg.noise_power_watts();
        assert!((10.0 * snr.log10() - 20.0).abs() < 1e-9);
    }
}
