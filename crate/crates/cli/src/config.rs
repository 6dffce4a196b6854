use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use nhreal::laser::PumpSpec;
use nhreal::mech::OscillatorChain;
use nhreal::model::LatticeSpec;
use nhreal::Tolerances;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Oscillators,
    Properties,
    #[value(name = "calibrate_s")]
    CalibrateS,
    Custom,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig1 => "fig1",
            Scenario::Fig2 => "fig2",
            Scenario::Fig3 => "fig3",
            Scenario::Fig4 => "fig4",
            Scenario::Fig5 => "fig5",
            Scenario::Oscillators => "oscillators",
            Scenario::Properties => "properties",
            Scenario::CalibrateS => "calibrate_s",
            Scenario::Custom => "custom",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub lattice: Option<LatticeSpec>,
    #[serde(default)]
    pub pump: Option<PumpSpec>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: OutputSpec,
    /// Oscillator chain for the `oscillators` scenario.
    #[serde(default)]
    pub chain: Option<OscillatorChain<f64>>,
    /// Trial count for `properties`.
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Anchor energy for `calibrate_s`, in units of `t`.
    #[serde(default)]
    pub anchor: Option<f64>,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            lattice: None,
            pump: None,
            tolerances: BTreeMap::new(),
            output: OutputSpec::default(),
            chain: None,
            trials: None,
            seed: None,
            anchor: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("config scenario is {found} but the subcommand is {expected}")]
    ScenarioMismatch { expected: Scenario, found: Scenario },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
}

fn field(name: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: name.to_string(),
        message: message.into(),
    }
}

pub fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// Fully resolved run settings.
#[derive(Clone, Debug)]
pub struct RunSettings {
    pub config: ScenarioConfig,
    pub out: PathBuf,
    pub format: Format,
    pub seed: u64,
    pub tolerances: Tolerances,
}

/// Command-line flags that override the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub tol: Vec<String>,
}

pub const DEFAULT_SEED: u64 = 7;

/// Checks scenario-specific fields and merges flags over the config.
pub fn resolve(subcommand: Scenario, config: Option<ScenarioConfig>, flags: Overrides) -> Result<RunSettings, ConfigError> {
    let config = config.unwrap_or_else(|| ScenarioConfig::new(subcommand));
    if config.scenario != subcommand {
        return Err(ConfigError::ScenarioMismatch {
            expected: subcommand,
            found: config.scenario,
        });
    }
    validate(&config)?;
    let mut tolerances = Tolerances::default();
    for (k, v) in &config.tolerances {
        tolerances.set(k, *v).map_err(|e| field(&format!("tolerances.{k}"), e.to_string()))?;
    }
    for spec in &flags.tol {
        tolerances.apply_override(spec).map_err(|e| field("--tol", e.to_string()))?;
    }
    Ok(RunSettings {
        out: flags
            .out
            .or_else(|| config.output.path.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        format: flags.format.or(config.output.format).unwrap_or_default(),
        seed: flags.seed.or(config.seed).unwrap_or(DEFAULT_SEED),
        tolerances,
        config,
    })
}

fn validate(c: &ScenarioConfig) -> Result<(), ConfigError> {
    use Scenario::*;
    let fixed = matches!(c.scenario, Fig1 | Fig2 | Fig3 | Fig4 | Fig5);
    if fixed && c.lattice.is_some() {
        return Err(field("lattice", format!("{} uses a fixed lattice; use the custom scenario instead", c.scenario)));
    }
    if fixed && c.pump.is_some() {
        return Err(field("pump", format!("{} uses a fixed pump; use the custom scenario instead", c.scenario)));
    }
    if c.chain.is_some() && c.scenario != Oscillators {
        return Err(field("chain", "only used by the oscillators scenario"));
    }
    if c.trials.is_some() && c.scenario != Properties {
        return Err(field("trials", "only used by the properties scenario"));
    }
    if c.anchor.is_some() && c.scenario != CalibrateS {
        return Err(field("anchor", "only used by the calibrate_s scenario"));
    }
    match c.scenario {
        Custom => {
            let lattice = c.lattice.as_ref().ok_or_else(|| field("lattice", "required by the custom scenario"))?;
            lattice.validate().map_err(|e| field("lattice", e.to_string()))?;
            if let Some(p) = &c.pump {
                p.validate(lattice.n).map_err(|e| field("pump", e.to_string()))?;
            }
        }
        Oscillators => {
            if let Some(ch) = &c.chain {
                ch.validate().map_err(|e| field("chain", e.to_string()))?;
            }
        }
        Properties => {
            if c.trials == Some(0) {
                return Err(field("trials", "must be at least 1"));
            }
        }
        CalibrateS => {
            if let Some(a) = c.anchor {
                if !(a.is_finite() && a > 0.0) {
                    return Err(field("anchor", format!("must be positive, got {a}")));
                }
            }
        }
        _ => {}
    }
    if c.lattice.is_some() && !matches!(c.scenario, Custom) {
        return Err(field("lattice", format!("not used by {}", c.scenario)));
    }
    if c.pump.is_some() && !matches!(c.scenario, Custom) {
        return Err(field("pump", format!("not used by {}", c.scenario)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys() {
        let e = serde_json::from_str::<ScenarioConfig>(r#"{"scenario":"fig1","colour":1}"#);
        assert!(e.is_err());
    }

    #[test]
    fn mismatch_and_requirements() {
        let c = ScenarioConfig::new(Scenario::Fig2);
        assert!(matches!(
            resolve(Scenario::Fig3, Some(c), Overrides::default()),
            Err(ConfigError::ScenarioMismatch { .. })
        ));
        let c = ScenarioConfig::new(Scenario::Custom);
        let e = resolve(Scenario::Custom, Some(c), Overrides::default()).unwrap_err();
        assert!(e.to_string().contains("lattice"));
    }

    #[test]
    fn flags_override_config() {
        let mut c = ScenarioConfig::new(Scenario::Properties);
        c.seed = Some(3);
        c.tolerances.insert("spectra.real".into(), 1e-7);
        let s = resolve(
            Scenario::Properties,
            Some(c),
            Overrides {
                seed: Some(9),
                tol: vec!["spectra.real=1e-6".into()],
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.tolerances.spectra.real, 1e-6);
        assert_eq!(s.format, Format::Csv);
    }

    #[test]
    fn bad_tolerance_key() {
        let s = resolve(
            Scenario::Fig1,
            None,
            Overrides {
                tol: vec!["nope=1".into()],
                ..Default::default()
            },
        );
        assert!(s.is_err());
    }
}
