//! Scenario selection, overrides and config loading.

use std::fmt;
use std::path::Path;

use nfce::SimulationConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    LocDemo,
    LocCdf,
    LocRmseSweep,
    LocBench,
    CeNmseVsPilots,
    CeNmseVsIters,
    CeOversampling,
    CeRobustness,
    CeMinSamples,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 9] = [
        Self::LocDemo,
        Self::LocCdf,
        Self::LocRmseSweep,
        Self::LocBench,
        Self::CeNmseVsPilots,
        Self::CeNmseVsIters,
        Self::CeOversampling,
        Self::CeRobustness,
        Self::CeMinSamples,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LocDemo => "loc-demo",
            Self::LocCdf => "loc-cdf",
            Self::LocRmseSweep => "loc-rmse-sweep",
            Self::LocBench => "loc-bench",
            Self::CeNmseVsPilots => "ce-nmse-vs-pilots",
            Self::CeNmseVsIters => "ce-nmse-vs-iters",
            Self::CeOversampling => "ce-oversampling",
            Self::CeRobustness => "ce-robustness",
            Self::CeMinSamples => "ce-min-samples",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScenarioName {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| HarnessError::Usage(format!("unknown scenario `{s}`")))
    }
}

/// Parameter lists replacing a scenario's default sweep axes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Overrides {
    /// Grid oversampling for the runtime benchmark.
    pub eta: Option<Vec<f64>>,
    /// Dictionary oversampling.
    pub beta: Option<Vec<f64>>,
    /// Compression ratios `τ / (N_BS·N_UE)`.
    pub mu: Option<Vec<f64>>,
    /// Pilot lengths; take precedence over `mu`.
    pub tau: Option<Vec<i64>>,
    /// OMP iteration budgets.
    pub iterations: Option<Vec<i64>>,
    /// Location perturbation radii in meters.
    pub epsilon: Option<Vec<f64>>,
    pub fc_hz: Option<Vec<f64>>,
    pub n_bs: Option<Vec<i64>>,
    /// Number of scatterers `L`.
    pub paths: Option<i64>,
}

fn check_list<T: Copy>(key: &str, list: &Option<Vec<T>>, ok: impl Fn(T) -> bool, what: &str) -> Result<()>
where
    T: fmt::Display,
{
    if let Some(values) = list {
        if values.is_empty() {
            return Err(config_err(key, "list must not be empty"));
        }
        if let Some(bad) = values.iter().find(|v| !ok(**v)) {
            return Err(config_err(key, format!("{what}, got {bad}")));
        }
    }
    Ok(())
}

fn config_err(key: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        key: format!("scenario.overrides.{key}"),
        message: message.into(),
    }
}

fn is_int(v: f64) -> bool {
    v.is_finite() && v.fract() == 0.0
}

impl Overrides {
    pub fn validate(&self) -> Result<()> {
        check_list("eta", &self.eta, |v| is_int(v) && v >= 1.0, "must be an integer ≥ 1")?;
        check_list("beta", &self.beta, |v| is_int(v) && v >= 1.0, "must be an integer ≥ 1")?;
        check_list("mu", &self.mu, |v| v.is_finite() && v > 0.0 && v <= 1.0, "must lie in (0, 1]")?;
        check_list("tau", &self.tau, |v| v >= 1, "must be at least 1")?;
        check_list("iterations", &self.iterations, |v| v >= 1, "must be at least 1")?;
        check_list("epsilon", &self.epsilon, |v| v.is_finite() && v >= 0.0, "must be non-negative")?;
        check_list("fc_hz", &self.fc_hz, |v| v.is_finite() && v > 0.0, "must be positive")?;
        check_list("n_bs", &self.n_bs, |v| v >= 2, "must be at least 2")?;
        if let Some(l) = self.paths {
            if l < 0 {
                return Err(config_err("paths", format!("must be non-negative, got {l}")));
            }
        }
        Ok(())
    }
}

/// The `scenario` section of a config file; every field optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub name: Option<ScenarioName>,
    pub trials: Option<i64>,
    pub seed: Option<u64>,
    pub overrides: Overrides,
}

impl ScenarioSection {
    pub fn from_value(value: Option<&serde_json::Value>) -> Result<Self> {
        let Some(value) = value else {
            return Ok(Self::default());
        };
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "scenario".to_string() } else { format!("scenario.{path}") };
            HarnessError::Config {
                key,
                message: e.into_inner().to_string(),
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    pub trials: usize,
    pub seed: u64,
    pub overrides: Overrides,
}

impl ScenarioSpec {
    pub fn new(name: ScenarioName, trials: usize, seed: u64) -> Result<Self> {
        let spec = Self {
            name,
            trials,
            seed,
            overrides: Overrides::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_overrides(mut self, overrides: Overrides) -> Result<Self> {
        self.overrides = overrides;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(HarnessError::Usage("trials must be at least 1".into()));
        }
        self.overrides.validate()
    }

    /// Combines a config section with command-line values; the command line wins.
    pub fn resolve(
        section: &ScenarioSection,
        name: Option<ScenarioName>,
        trials: Option<usize>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let name = name
            .or(section.name)
            .ok_or_else(|| HarnessError::Usage("no scenario given".into()))?;
        let trials = match (trials, section.trials) {
            (Some(t), _) => t,
            (None, Some(t)) if t < 0 => {
                return Err(HarnessError::Config {
                    key: "scenario.trials".into(),
                    message: format!("must be at least 1, got {t}"),
                })
            }
            (None, Some(t)) => t as usize,
            (None, None) => DEFAULT_TRIALS,
        };
        let spec = Self {
            name,
            trials,
            seed: seed.or(section.seed).unwrap_or(DEFAULT_SEED),
            overrides: section.overrides.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub simulation: SimulationConfig,
    pub scenario: ScenarioSection,
}

pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let simulation = SimulationConfig::from_json_str(text)?;
    let scenario = ScenarioSection::from_value(simulation.scenario.as_ref())?;
    scenario.overrides.validate()?;
    Ok(LoadedConfig { simulation, scenario })
}

/// Reads and validates a JSON config file. An empty file yields all defaults.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config(&text)
}
