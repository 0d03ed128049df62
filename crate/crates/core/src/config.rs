//! Scenario files: TOML text with temperatures given in K (bare numbers) or
//! as strings such as `"45 C"` / `"318.15 K"`. Everything is stored in K
//! after loading.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::acpf::{Branch, BusKind, BusSpec, NetworkModel};
use crate::engine::{
    Component, ComponentModel, Coupling, HitCounting, InitialComponentState, InitialTemperatures,
    Monitor, Scenario, Simulator,
};
use crate::rng::stream;
use crate::stoch::{rates_for_target, LoadCurve, TwoStateCluster, WindChain};
use crate::thermo::ThermalLineParams;

const HOUR: f64 = 3600.0;
const KELVIN_OFFSET: f64 = 273.15;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.to_string() }
}

/// Absolute temperature, K.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Kelvin(pub f64);

impl Kelvin {
    pub fn celsius(self) -> f64 {
        self.0 - KELVIN_OFFSET
    }
}

impl std::str::FromStr for Kelvin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim();
        let (num, unit) = match t.find(|c: char| c.is_alphabetic() || c == '°') {
            Some(i) => (t[..i].trim(), t[i..].trim().trim_start_matches('°')),
            None => (t, "K"),
        };
        let v: f64 = num.parse().map_err(|_| format!("bad temperature `{s}`"))?;
        match unit {
            "K" | "k" => Ok(Kelvin(v)),
            "C" | "c" | "degC" => Ok(Kelvin(v + KELVIN_OFFSET)),
            _ => Err(format!("unknown temperature unit in `{s}`")),
        }
    }
}

impl Serialize for Kelvin {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Kelvin {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Kelvin(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Crude,
    Restart,
    SteadyState,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Crude => "crude",
            Mode::Restart => "restart",
            Mode::SteadyState => "steady-state",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "crude" => Ok(Mode::Crude),
            "restart" => Ok(Mode::Restart),
            "steady-state" => Ok(Mode::SteadyState),
            _ => Err(format!("unknown mode `{s}` (crude | restart | steady-state)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingConfig {
    #[default]
    Decoupled,
    FullyCoupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CountingConfig {
    #[default]
    FirstPassage,
    Crossings,
}

fn default_epsilon() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    1
}
fn default_max_trials() -> u64 {
    10_000_000
}
fn default_min_trials() -> u64 {
    100
}
fn default_pilot_trials() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub mode: Mode,
    /// Monitored line names.
    pub lines: Vec<String>,
    pub thresholds: Vec<Kelvin>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_max_trials")]
    pub max_trials: u64,
    #[serde(default = "default_min_trials")]
    pub min_trials: u64,
    #[serde(default = "default_pilot_trials")]
    pub pilot_trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_wall_s: Option<f64>,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub counting: CountingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub start_h: f64,
    pub end_h: f64,
    pub dt_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BusKindConfig {
    Slack,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusConfig {
    pub id: usize,
    pub kind: BusKindConfig,
    #[serde(default)]
    pub load_p_mw: f64,
    #[serde(default)]
    pub load_q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub name: String,
    pub from: usize,
    pub to: usize,
    pub length_km: f64,
    pub conductor: String,
    /// Series resistance at the reference temperature, p.u.; derived from the
    /// conductor data and the base voltage when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_pu: Option<f64>,
    #[serde(default)]
    pub b_half_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub base_power_mva: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_voltage_kv: Option<f64>,
    pub slack_voltage: f64,
    pub bus: Vec<BusConfig>,
    pub line: Vec<LineConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConductorConfig {
    pub heat_capacity: f64,
    pub conv_coeff: f64,
    pub rad_coeff: f64,
    pub solar_gain: f64,
    pub ambient: Kelvin,
    pub ref_temp: Kelvin,
    pub resist_temp_coeff: f64,
    pub ref_resistance_per_m: f64,
    pub reactance_per_m: f64,
    pub max_operating_temp: Kelvin,
}

impl ConductorConfig {
    fn params(&self, length_m: f64) -> ThermalLineParams<f64> {
        ThermalLineParams {
            heat_capacity: self.heat_capacity,
            conv_coeff: self.conv_coeff,
            rad_coeff: self.rad_coeff,
            solar_gain: self.solar_gain,
            ambient_temp: self.ambient.0,
            ref_temp: self.ref_temp.0,
            resist_temp_coeff: self.resist_temp_coeff,
            ref_resistance_per_m: self.ref_resistance_per_m,
            reactance_per_m: self.reactance_per_m,
            length: length_m,
            max_operating_temp: self.max_operating_temp.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub name: String,
    pub bus: usize,
    pub units: usize,
    pub cluster_size: usize,
    pub unit_p_mw: f64,
    #[serde(default)]
    pub unit_q_mvar: f64,
    /// Up-down-up cycles per hour with equal up and down rates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_per_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_up_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_down_h: Option<f64>,
    /// Clusters down at the window start; drawn from the long-run
    /// availability when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initially_down: Option<usize>,
}

impl ClusterConfig {
    /// (failure, repair) rates per second.
    fn rates(&self) -> Result<(f64, f64), ConfigError> {
        let field = format!("cluster.{}", self.name);
        match (self.frequency_per_h, self.mean_up_h, self.mean_down_h) {
            (Some(f), None, None) => {
                if !(f > 0.0) {
                    return Err(invalid(field, "frequency_per_h must be positive"));
                }
                Ok(rates_for_target(f / HOUR))
            }
            (None, Some(up), Some(down)) => {
                if !(up > 0.0 && down > 0.0) {
                    return Err(invalid(field, "mean holding times must be positive"));
                }
                Ok((1.0 / (up * HOUR), 1.0 / (down * HOUR)))
            }
            _ => Err(invalid(field, "give either frequency_per_h or both mean_up_h and mean_down_h")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindConfig {
    pub name: String,
    pub bus: usize,
    pub sampling_per_min: f64,
    /// One-based state at the window start; stationary draw when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<usize>,
    /// (P, Q) per state, p.u. of the system base.
    pub output_pu: Vec<[f64; 2]>,
    pub transition: Vec<Vec<f64>>,
    /// Convective cooling coefficient applied to every line in each state.
    #[serde(default)]
    pub conv_coeff: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadCurveConfig {
    /// Level per hour starting at t = 0.
    pub hourly: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    SteadyState,
    MeanSteadyState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialTemperatureConfig {
    Kind(InitialKind),
    Fixed(Vec<Kelvin>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub temperatures: InitialTemperatureConfig,
}

/// Grid of cluster settings studied one after another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Cluster to vary.
    pub cluster: String,
    pub frequencies_per_h: Vec<f64>,
    pub cluster_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub study: StudyConfig,
    pub window: WindowConfig,
    pub network: NetworkConfig,
    pub conductor: BTreeMap<String, ConductorConfig>,
    #[serde(default, rename = "cluster", skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<ClusterConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wind: Option<WindConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_curve: Option<LoadCurveConfig>,
    pub initial: InitialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// Reads, validates and normalizes a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg: ScenarioConfig = toml::from_str(text)?;
    if let Some(w) = &mut cfg.wind {
        let (chain, fix) = w.chain()?;
        for (row, sum) in &fix.rows {
            log::info!("wind transition row {} summed to {sum:.6}; rescaled to 1", row + 1);
        }
        w.transition = chain.transition_matrix;
    }
    cfg.validate()?;
    Ok(cfg)
}

impl WindConfig {
    fn chain(&self) -> Result<(WindChain, crate::stoch::Renormalization), ConfigError> {
        WindChain::new(
            self.output_pu.iter().map(|o| (o[0], o[1])).collect(),
            self.transition.clone(),
            self.sampling_per_min / 60.0,
            self.conv_coeff.clone(),
        )
        .map_err(|e| invalid(format!("wind.{}", self.name), e))
    }
}

impl ScenarioConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// Short SHA-256 digest of the normalized configuration.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&hash[..8])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.study;
        if !(s.epsilon > 0.0 && s.epsilon < 1.0) {
            return Err(invalid("study.epsilon", "must lie in (0, 1)"));
        }
        if s.lines.is_empty() || s.thresholds.is_empty() {
            return Err(invalid("study", "need at least one line and one threshold"));
        }
        if s.max_trials == 0 || s.pilot_trials < 100 {
            return Err(invalid("study", "max_trials must be positive and pilot_trials at least 100"));
        }
        let scenario = self.to_scenario()?;
        for line in &s.lines {
            if scenario.line_index(line).is_none() {
                return Err(invalid("study.lines", format!("unknown line `{line}`")));
            }
        }
        if let Some(sw) = &self.sweep {
            if !self.clusters.iter().any(|c| c.name == sw.cluster) {
                return Err(invalid("sweep.cluster", format!("unknown cluster `{}`", sw.cluster)));
            }
            for v in self.variants() {
                v.1.to_scenario()?;
            }
        }
        let sim = Simulator::new(scenario).map_err(|e| invalid("scenario", e))?;
        let state = sim.initial_state(stream(s.seed, 0, 0)).map_err(|e| invalid("initial", e))?;
        for line in &s.lines {
            let l = sim.scenario().line_index(line).expect("checked above");
            for t in &s.thresholds {
                if t.0 <= state.temperatures[l] {
                    return Err(invalid(
                        "study.thresholds",
                        format!(
                            "{:.2} K is not above the initial temperature {:.2} K of line {line}",
                            t.0, state.temperatures[l]
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn start(&self) -> f64 {
        self.window.start_h * HOUR
    }

    pub fn end(&self) -> f64 {
        self.window.end_h * HOUR
    }

    /// Builds the engine scenario.
    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let net = &self.network;
        if !(net.base_power_mva > 0.0) {
            return Err(invalid("network.base_power_mva", "must be positive"));
        }
        let bus_index = |id: usize, field: &str| -> Result<usize, ConfigError> {
            net.bus.iter().position(|b| b.id == id).ok_or_else(|| invalid(field, format!("unknown bus {id}")))
        };
        let buses: Vec<BusSpec<f64>> = net
            .bus
            .iter()
            .map(|b| BusSpec {
                id: b.id,
                kind: match b.kind {
                    BusKindConfig::Slack => BusKind::Slack,
                    BusKindConfig::Pq => BusKind::Pq,
                },
                load_p: b.load_p_mw / net.base_power_mva,
                load_q: b.load_q_mvar / net.base_power_mva,
            })
            .collect();
        let mut branches = Vec::with_capacity(net.line.len());
        for l in &net.line {
            let field = format!("network.line.{}", l.name);
            let cond = self
                .conductor
                .get(&l.conductor)
                .ok_or_else(|| invalid(&field, format!("unknown conductor `{}`", l.conductor)))?;
            if !(l.length_km > 0.0) {
                return Err(invalid(&field, "length_km must be positive"));
            }
            let length = l.length_km * 1000.0;
            let thermal = cond.params(length);
            thermal.validate().map_err(|e| invalid(format!("conductor.{}", l.conductor), e))?;
            let z_base = || {
                net.base_voltage_kv
                    .filter(|v| *v > 0.0)
                    .map(|v| v * v / net.base_power_mva)
                    .ok_or_else(|| invalid(&field, "r_pu/x_pu missing and no base_voltage_kv given"))
            };
            let r = match l.r_pu {
                Some(r) => r,
                None => cond.ref_resistance_per_m * length / z_base()?,
            };
            let x = match l.x_pu {
                Some(x) => x,
                None => cond.reactance_per_m * length / z_base()?,
            };
            let from = bus_index(l.from, &field)?;
            let to = bus_index(l.to, &field)?;
            branches.push(Branch::new(l.name.clone(), from, to, r, x, l.b_half_pu, thermal));
        }
        let network = NetworkModel::new(net.base_power_mva, net.slack_voltage, buses, branches)
            .map_err(|e| invalid("network", e))?;

        let mut components = Vec::new();
        for c in &self.clusters {
            let field = format!("cluster.{}", c.name);
            let (fail, repair) = c.rates()?;
            let model = TwoStateCluster::new(c.units, c.cluster_size, c.unit_p_mw, c.unit_q_mvar, fail, repair)
                .map_err(|e| invalid(&field, e))?;
            let initial = match c.initially_down {
                Some(n) => InitialComponentState::ClustersDown(n),
                None => InitialComponentState::Stationary,
            };
            components.push(Component {
                name: c.name.clone(),
                model: ComponentModel::Cluster(model),
                bus: bus_index(c.bus, &field)?,
                initial,
            });
        }
        if let Some(w) = &self.wind {
            let field = format!("wind.{}", w.name);
            let (chain, _) = w.chain()?;
            let initial = match w.initial_state {
                Some(0) => return Err(invalid(&field, "initial_state is one-based")),
                Some(s) => InitialComponentState::WindState(s - 1),
                None => InitialComponentState::Stationary,
            };
            components.push(Component {
                name: w.name.clone(),
                model: ComponentModel::Wind(chain),
                bus: bus_index(w.bus, &field)?,
                initial,
            });
        }
        let load_curve = match &self.load_curve {
            Some(lc) => Some(LoadCurve::hourly(&lc.hourly).map_err(|e| invalid("load_curve", e))?),
            None => None,
        };
        let initial_temperatures = match &self.initial.temperatures {
            InitialTemperatureConfig::Kind(InitialKind::SteadyState) => InitialTemperatures::SteadyState,
            InitialTemperatureConfig::Kind(InitialKind::MeanSteadyState) => InitialTemperatures::MeanSteadyState,
            InitialTemperatureConfig::Fixed(t) => InitialTemperatures::Fixed(t.iter().map(|k| k.0).collect()),
        };
        let scenario = Scenario {
            network,
            components,
            load_curve,
            start: self.start(),
            end: self.end(),
            dt: self.window.dt_s,
            initial_temperatures,
            coupling: match self.study.coupling {
                CouplingConfig::Decoupled => Coupling::Decoupled,
                CouplingConfig::FullyCoupled => Coupling::FullyCoupled,
            },
        };
        scenario.validate().map_err(|e| invalid("window", e))?;
        Ok(scenario)
    }

    /// The configuration itself, or one copy per sweep point labelled `f=..,C=..`.
    pub fn variants(&self) -> Vec<(String, ScenarioConfig)> {
        let Some(sw) = &self.sweep else {
            return vec![(self.name.clone(), self.clone())];
        };
        let mut out = Vec::new();
        for &c in &sw.cluster_sizes {
            for &f in &sw.frequencies_per_h {
                let mut v = self.clone();
                v.sweep = None;
                for cl in v.clusters.iter_mut().filter(|cl| cl.name == sw.cluster) {
                    cl.cluster_size = c;
                    cl.frequency_per_h = Some(f);
                    cl.mean_up_h = None;
                    cl.mean_down_h = None;
                }
                out.push((format!("{} f={f} C={c}", self.name), v));
            }
        }
        out
    }

    pub fn monitors(&self, scenario: &Scenario) -> Vec<(String, Monitor)> {
        self.study
            .lines
            .iter()
            .filter_map(|name| {
                let l = scenario.line_index(name)?;
                let m = match self.study.mode {
                    Mode::SteadyState => Monitor::steady_state(l),
                    _ => Monitor::temperature(l),
                };
                Some((name.clone(), m))
            })
            .collect()
    }

    pub fn counting(&self) -> HitCounting {
        match self.study.counting {
            CountingConfig::FirstPassage => HitCounting::FirstPassage,
            CountingConfig::Crossings => HitCounting::Crossings,
        }
    }
}
