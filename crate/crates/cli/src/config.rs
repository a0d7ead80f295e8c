//! TOML configuration.
//!
//! Physical parameter groups are mandatory. `[reduction]`, `[delays]`,
//! `[synthesis]`, `[[scenario]]` and `[provenance]` take built-in defaults
//! when omitted. Unknown keys are rejected at every level.

use std::collections::BTreeMap;
use std::path::Path;

use inertia_core::mrc::{DelayBounds, GainPair, SynthesisOptions};
use inertia_core::plant::{
    BaseUnits, DieselParams, FilterParams, MscGains, PlantParameters, PmsgParams, ReferenceParams, TurbineParams,
    WtgParams,
};
use inertia_core::sim::{Controller, Disturbance, Fidelity, Scenario};
use inertia_core::sma::TurbineReductionOptions;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

pub const GROUPS: [&str; 12] = [
    "base", "diesel", "turbine", "pmsg", "msc", "filter", "reference", "reduction", "delays", "synthesis", "scenario",
    "provenance",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerSpec {
    None,
    /// Gains come from synthesis or a gain file.
    Mrc { delay: f64 },
    Washout {
        k_w: f64,
        #[serde(default = "default_washout_time_constant")]
        time_constant: f64,
    },
}

fn default_washout_time_constant() -> f64 {
    0.005
}

fn default_duration() -> f64 {
    10.0
}

fn default_dt() -> f64 {
    1e-3
}

fn default_rocof_window() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub disturbance: Disturbance,
    pub controller: ControllerSpec,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub fidelity: Fidelity,
    #[serde(default = "default_rocof_window")]
    pub rocof_window: f64,
}

impl ScenarioSpec {
    pub fn needs_gain(&self) -> bool {
        matches!(self.controller, ControllerSpec::Mrc { .. })
    }

    pub fn to_scenario(&self, gains: GainPair) -> Scenario {
        let controller = match self.controller {
            ControllerSpec::None => Controller::None,
            ControllerSpec::Mrc { delay } => Controller::Mrc { gains, delay },
            ControllerSpec::Washout { k_w, time_constant } => Controller::Washout { k_w, time_constant },
        };
        Scenario {
            name: self.name.clone(),
            disturbance: self.disturbance,
            controller,
            duration: self.duration,
            dt: self.dt,
            fidelity: self.fidelity,
            rocof_window: self.rocof_window,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Free-text source notes keyed by group name.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
    pub base: BaseUnits,
    pub diesel: DieselParams,
    pub turbine: TurbineParams,
    pub pmsg: PmsgParams,
    pub msc: MscGains,
    pub filter: FilterParams,
    pub reference: ReferenceParams,
    #[serde(default)]
    pub reduction: TurbineReductionOptions,
    #[serde(default)]
    pub delays: DelayBounds,
    #[serde(default)]
    pub synthesis: SynthesisOptions,
    #[serde(default, rename = "scenario")]
    pub scenarios: Vec<ScenarioSpec>,
}

impl Config {
    /// The shipped `config/default.toml`.
    pub fn default_config() -> Config {
        Config::from_toml_str(DEFAULT_CONFIG, "config/default.toml").expect("shipped config is valid")
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        Config::from_toml_str(&text, &path.display().to_string())
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Config, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
            CliError::Parse { origin: origin.to_string(), line, message: e.message().trim().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn plant(&self) -> PlantParameters {
        PlantParameters {
            base: self.base,
            diesel: self.diesel,
            wtg: WtgParams { turbine: self.turbine, pmsg: self.pmsg, msc: self.msc },
            filter: self.filter,
            reference: self.reference,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for key in self.provenance.keys() {
            if !GROUPS.contains(&key.as_str()) || key == "provenance" {
                return Err(CliError::invalid(format!("`provenance.{key}`: not a configuration group")));
            }
        }
        self.plant().validate()?;
        if !(self.reduction.v_wind.is_finite() && self.reduction.v_wind > 0.0) {
            return Err(CliError::invalid("`reduction.v_wind`: must be finite and > 0"));
        }
        self.delays.validate("delays")?;
        self.synthesis.validate("synthesis")?;
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.scenarios {
            if s.name.is_empty() || s.name.contains(['/', '\\']) {
                return Err(CliError::invalid(format!("`scenario.name`: `{}` is not a usable file name", s.name)));
            }
            if !seen.insert(s.name.as_str()) {
                return Err(CliError::invalid(format!("`scenario.name`: duplicate `{}`", s.name)));
            }
            s.to_scenario(GainPair::zero())
                .validate()
                .map_err(|e| CliError::invalid(format!("`scenario.{}`: {e}", s.name)))?;
        }
        Ok(())
    }

    pub fn scenario(&self, name: &str) -> Option<&ScenarioSpec> {
        self.scenarios.iter().find(|s| s.name == name)
    }
}
