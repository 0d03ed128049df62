use crate::acpf::NetworkModel;
use crate::stoch::{BernoulliSwitch, LoadCurve, TwoStateCluster, WindChain};
use crate::thermo::step_count;

use super::EngineError;

#[derive(Debug, Clone, PartialEq)]
pub enum ComponentModel {
    Cluster(TwoStateCluster),
    Wind(WindChain),
    Bernoulli(BernoulliSwitch),
}

/// How a component starts at the beginning of the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialComponentState {
    /// Drawn from the long-run distribution of the component.
    Stationary,
    /// Cluster model: the first `n` clusters start down, the rest up.
    ClustersDown(usize),
    /// Wind model: zero-based state index.
    WindState(usize),
    /// Bernoulli switch: off until its decision time.
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub name: String,
    pub model: ComponentModel,
    /// Bus index the injection attaches to.
    pub bus: usize,
    pub initial: InitialComponentState,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialTemperatures {
    /// Steady state of the actual initial operating point.
    SteadyState,
    /// Steady state of the operating point with every component at its mean output.
    MeanSteadyState,
    /// Explicit per-line temperatures, K.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// Power flow and resistances refreshed only at component events.
    Decoupled,
    /// Power flow and resistances refreshed after every integration step.
    FullyCoupled,
}

/// A complete simulation case: network, stochastic components and time window.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: NetworkModel<f64>,
    pub components: Vec<Component>,
    pub load_curve: Option<LoadCurve>,
    /// Window start, s.
    pub start: f64,
    /// Window end, s.
    pub end: f64,
    /// Integration step, s.
    pub dt: f64,
    pub initial_temperatures: InitialTemperatures,
    pub coupling: Coupling,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |reason: String| Err(EngineError::InvalidScenario(reason));
        if !(self.end > self.start) {
            return bad(format!("empty window [{}, {})", self.start, self.end));
        }
        if step_count(self.end - self.start, self.dt).is_none() {
            return bad(format!("window length is not a multiple of dt = {}", self.dt));
        }
        let nbus = self.network.buses().len();
        for c in &self.components {
            if c.bus >= nbus {
                return bad(format!("component `{}` bound to missing bus", c.name));
            }
            let ok = match (&c.model, c.initial) {
                (_, InitialComponentState::Stationary) => true,
                (ComponentModel::Cluster(m), InitialComponentState::ClustersDown(n)) => n <= m.cluster_count(),
                (ComponentModel::Wind(w), InitialComponentState::WindState(s)) => s < w.state_count(),
                (ComponentModel::Bernoulli(_), InitialComponentState::Off) => true,
                _ => false,
            };
            if !ok {
                return bad(format!("component `{}` has an incompatible initial state", c.name));
            }
        }
        if let Some(curve) = &self.load_curve {
            if curve.step_index(self.start).is_err() || curve.end() < self.end {
                return bad("load curve does not cover the analysis window".into());
            }
        }
        if let InitialTemperatures::Fixed(t) = &self.initial_temperatures {
            if t.len() != self.network.branches().len() || t.iter().any(|x| !(*x > 0.0)) {
                return bad("fixed initial temperatures must give one positive value per line".into());
            }
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        step_count(self.end - self.start, self.dt).unwrap_or(0)
    }

    pub fn line_index(&self, name: &str) -> Option<usize> {
        self.network.branch_index(name)
    }
}

/// Which scalar of a line is compared against the thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MonitorKind {
    /// Dynamic conductor temperature.
    Temperature,
    /// Steady-state temperature the present current would settle at under
    /// the present weather; crossing a level here is equivalent to the
    /// current exceeding the steady-state ampacity for that level.
    SteadyStateEquivalent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Monitor {
    pub line: usize,
    pub kind: MonitorKind,
}

impl Monitor {
    pub fn temperature(line: usize) -> Self {
        Self { line, kind: MonitorKind::Temperature }
    }

    pub fn steady_state(line: usize) -> Self {
        Self { line, kind: MonitorKind::SteadyStateEquivalent }
    }
}
