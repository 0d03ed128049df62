//! Event-driven trajectory of one system: component events, power-flow
//! refreshes and fixed-step integration of every line temperature.

use num_complex::Complex64;
use rand::Rng;

use crate::acpf::{joule_w_per_m, solve_power_flow, NetworkModel, PowerFlowSolution};
use crate::rng::StreamRng;
use crate::stoch::{sample_exponential, stationary_distribution, wind_next, UnitState};
use crate::thermo::{
    phase_current_from_loss, rk4_step, steady_state_temperature_with, Heating, Weather,
    DEFAULT_TEMPERATURE_CAP,
};

use super::scenario::{
    ComponentModel, Coupling, InitialComponentState, InitialTemperatures, Monitor, MonitorKind,
    Scenario,
};
use super::EngineError;

const STEADY_STATE_SWEEPS: usize = 100;
const STEADY_STATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum ComponentState {
    Cluster { up: Vec<bool>, next: Vec<f64> },
    Wind { state: usize, next: f64, next_state: usize },
    Bernoulli { on: bool, decided: bool },
}

/// Everything needed to continue a trajectory. Cloning gives an exact
/// snapshot, including the random stream position.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    /// Grid steps taken since the window start.
    pub step: u64,
    pub clock: f64,
    pub components: Vec<ComponentState>,
    pub load_step: usize,
    pub weather: Weather<f64>,
    /// Conductor temperatures, K.
    pub temperatures: Vec<f64>,
    /// Phase currents held since the last power-flow refresh, A.
    pub currents: Vec<f64>,
    /// Steady-state temperature of each held current; only maintained when tracking is on.
    pub steady_levels: Vec<f64>,
    pub network: NetworkModel<f64>,
    pub solution: PowerFlowSolution<f64>,
    pub rng: StreamRng,
}

pub struct Simulator {
    scenario: Scenario,
    total_steps: u64,
    stationary: Vec<Option<Vec<f64>>>,
    mean_temperatures: Option<Vec<f64>>,
    track_steady_state: bool,
}

impl Simulator {
    pub fn new(scenario: Scenario) -> Result<Self, EngineError> {
        scenario.validate()?;
        let mut stationary = Vec::with_capacity(scenario.components.len());
        for c in &scenario.components {
            stationary.push(match &c.model {
                ComponentModel::Wind(w) => Some(stationary_distribution(w)?),
                _ => None,
            });
        }
        let mut sim = Self {
            total_steps: scenario.total_steps(),
            scenario,
            stationary,
            mean_temperatures: None,
            track_steady_state: false,
        };
        if sim.scenario.initial_temperatures == InitialTemperatures::MeanSteadyState {
            sim.mean_temperatures = Some(sim.mean_steady_state()?);
        }
        Ok(sim)
    }

    /// Keeps the steady-state-equivalent level of every line up to date.
    pub fn with_steady_state_tracking(mut self, on: bool) -> Self {
        self.track_steady_state = on;
        self
    }

    pub fn tracks_steady_state(&self) -> bool {
        self.track_steady_state
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn is_finished(&self, state: &SystemState) -> bool {
        state.step >= self.total_steps
    }

    pub fn level(&self, state: &SystemState, monitor: Monitor) -> f64 {
        match monitor.kind {
            MonitorKind::Temperature => state.temperatures[monitor.line],
            MonitorKind::SteadyStateEquivalent => state.steady_levels[monitor.line],
        }
    }

    pub fn initial_state(&self, mut rng: StreamRng) -> Result<SystemState, EngineError> {
        let sc = &self.scenario;
        let mut components = Vec::with_capacity(sc.components.len());
        for (k, c) in sc.components.iter().enumerate() {
            components.push(match &c.model {
                ComponentModel::Cluster(m) => {
                    let n = m.cluster_count();
                    let mut up = vec![true; n];
                    match c.initial {
                        InitialComponentState::ClustersDown(d) => up[..d].fill(false),
                        _ => {
                            let a = m.availability();
                            for u in up.iter_mut() {
                                *u = rng.random::<f64>() < a;
                            }
                        }
                    }
                    let next = up
                        .iter()
                        .map(|&u| sc.start + sample_exponential(m.rate(unit_state(u)), &mut rng))
                        .collect();
                    ComponentState::Cluster { up, next }
                }
                ComponentModel::Wind(w) => {
                    let state = match c.initial {
                        InitialComponentState::WindState(s) => s,
                        _ => {
                            let pi = self.stationary[k].as_deref().unwrap_or(&[]);
                            sample_index(pi, &mut rng)
                        }
                    };
                    let ev = wind_next(w, k, state, sc.start, &mut rng);
                    ComponentState::Wind { state, next: ev.time, next_state: ev.new_state }
                }
                ComponentModel::Bernoulli(_) => ComponentState::Bernoulli { on: false, decided: false },
            });
        }
        let load_step = match &sc.load_curve {
            Some(curve) => curve.step_index(sc.start)?,
            None => 0,
        };
        let nl = sc.network.branches().len();
        let mut state = SystemState {
            step: 0,
            clock: sc.start,
            components,
            load_step,
            weather: Weather::calm(),
            temperatures: vec![0.0; nl],
            currents: vec![0.0; nl],
            steady_levels: vec![0.0; nl],
            network: sc.network.clone(),
            solution: PowerFlowSolution::flat(&sc.network),
            rng,
        };
        state.weather = self.weather_of(&state.components);
        match &sc.initial_temperatures {
            InitialTemperatures::Fixed(t) => state.temperatures = t.clone(),
            InitialTemperatures::MeanSteadyState => {
                state.temperatures = self.mean_temperatures.clone().unwrap_or_default()
            }
            InitialTemperatures::SteadyState => {
                state.temperatures = vec![sc.network.branches()[0].thermal.ref_temp; nl];
                let inj = self.injections(&state.components, state.load_step);
                self.settle(&mut state, &inj)?;
            }
        }
        self.refresh(&mut state)?;
        Ok(state)
    }

    /// One integration step followed by every component event that became
    /// due on the new grid point.
    pub fn step(&self, state: &mut SystemState) -> Result<(), EngineError> {
        let dt = self.scenario.dt;
        for (l, br) in self.scenario.network.branches().iter().enumerate() {
            let t = rk4_step(
                state.temperatures[l],
                &Heating::Current(state.currents[l]),
                &br.thermal,
                &state.weather,
                dt,
            );
            if !t.is_finite() || t <= 0.0 {
                return Err(EngineError::NonFiniteTemperature { line: l, time: state.clock });
            }
            state.temperatures[l] = t;
        }
        state.step += 1;
        state.clock = self.scenario.start + state.step as f64 * dt;
        let changed = self.apply_due_events(state)?;
        if changed || self.scenario.coupling == Coupling::FullyCoupled {
            self.refresh(state)?;
        }
        Ok(())
    }

    /// Redraws the residual holding time of every memoryless component, used
    /// when a retrial branches off a snapshot with a fresh random stream.
    pub fn resample_pending(&self, state: &mut SystemState) {
        let now = state.clock;
        for (k, (c, cs)) in self.scenario.components.iter().zip(state.components.iter_mut()).enumerate() {
            match (&c.model, cs) {
                (ComponentModel::Cluster(m), ComponentState::Cluster { up, next }) => {
                    for (u, n) in up.iter().zip(next.iter_mut()) {
                        *n = now + sample_exponential(m.rate(unit_state(*u)), &mut state.rng);
                    }
                }
                (ComponentModel::Wind(w), ComponentState::Wind { state: s, next, next_state }) => {
                    let ev = wind_next(w, k, *s, now, &mut state.rng);
                    *next = ev.time;
                    *next_state = ev.new_state;
                }
                _ => {}
            }
        }
    }

    fn apply_due_events(&self, state: &mut SystemState) -> Result<bool, EngineError> {
        let mut changed = false;
        loop {
            let Some((time, which)) = self.earliest_pending(state) else { break };
            if time > state.clock {
                break;
            }
            match which {
                Pending::Load => state.load_step += 1,
                Pending::Cluster(k, c) => {
                    let ComponentModel::Cluster(m) = &self.scenario.components[k].model else {
                        unreachable!()
                    };
                    if let ComponentState::Cluster { up, next } = &mut state.components[k] {
                        up[c] = !up[c];
                        next[c] = time + sample_exponential(m.rate(unit_state(up[c])), &mut state.rng);
                    }
                }
                Pending::Wind(k) => {
                    let ComponentModel::Wind(w) = &self.scenario.components[k].model else {
                        unreachable!()
                    };
                    if let ComponentState::Wind { state: s, next, next_state } = &mut state.components[k] {
                        *s = *next_state;
                        let ev = wind_next(w, k, *s, time, &mut state.rng);
                        *next = ev.time;
                        *next_state = ev.new_state;
                    }
                    state.weather = self.weather_of(&state.components);
                }
                Pending::Bernoulli(k) => {
                    let ComponentModel::Bernoulli(b) = &self.scenario.components[k].model else {
                        unreachable!()
                    };
                    let draw: f64 = state.rng.random();
                    if let ComponentState::Bernoulli { on, decided } = &mut state.components[k] {
                        *decided = true;
                        *on = draw < b.probability;
                    }
                }
            }
            changed = true;
        }
        Ok(changed)
    }

    fn earliest_pending(&self, state: &SystemState) -> Option<(f64, Pending)> {
        let mut best: Option<(f64, Pending)> = None;
        let mut consider = |t: f64, p: Pending| {
            if best.as_ref().is_none_or(|(bt, _)| t < *bt) {
                best = Some((t, p));
            }
        };
        if let Some(curve) = &self.scenario.load_curve {
            if let Some(t) = curve.next_breakpoint(state.load_step) {
                consider(t, Pending::Load);
            }
        }
        for (k, (c, cs)) in self.scenario.components.iter().zip(&state.components).enumerate() {
            match cs {
                ComponentState::Cluster { next, .. } => {
                    for (i, &t) in next.iter().enumerate() {
                        consider(t, Pending::Cluster(k, i));
                    }
                }
                ComponentState::Wind { next, .. } => consider(*next, Pending::Wind(k)),
                ComponentState::Bernoulli { decided: false, .. } => {
                    if let ComponentModel::Bernoulli(b) = &c.model {
                        consider(b.at_time, Pending::Bernoulli(k));
                    }
                }
                ComponentState::Bernoulli { .. } => {}
            }
        }
        best
    }

    fn weather_of(&self, components: &[ComponentState]) -> Weather<f64> {
        let mut w = Weather::calm();
        for (c, cs) in self.scenario.components.iter().zip(components) {
            if let (ComponentModel::Wind(chain), ComponentState::Wind { state, .. }) = (&c.model, cs) {
                if let Some(a) = chain.conv_coeff(*state) {
                    w.conv_coeff_override = Some(a);
                }
            }
        }
        w
    }

    fn load_level(&self, load_step: usize) -> f64 {
        match &self.scenario.load_curve {
            Some(curve) => curve.steps()[load_step].1,
            None => 1.0,
        }
    }

    /// Net bus injections (p.u.) for the given component states.
    pub fn injections(&self, components: &[ComponentState], load_step: usize) -> Vec<Complex64> {
        let sc = &self.scenario;
        let sb = sc.network.base_power_mva;
        let mut inj = sc.network.load_injections(self.load_level(load_step));
        for (c, cs) in sc.components.iter().zip(components) {
            let add = match (&c.model, cs) {
                (ComponentModel::Cluster(m), ComponentState::Cluster { up, .. }) => {
                    let n = up.iter().filter(|u| **u).count() as f64;
                    let (p, q) = m.cluster_output();
                    Complex64::new(n * p / sb, n * q / sb)
                }
                (ComponentModel::Wind(w), ComponentState::Wind { state, .. }) => {
                    let (p, q) = w.output_states[*state];
                    Complex64::new(p, q)
                }
                (ComponentModel::Bernoulli(b), ComponentState::Bernoulli { on: true, .. }) => {
                    Complex64::new(b.on_output.0 / sb, b.on_output.1 / sb)
                }
                _ => Complex64::new(0.0, 0.0),
            };
            inj[c.bus] += add;
        }
        inj
    }

    fn mean_injections(&self) -> Vec<Complex64> {
        let sc = &self.scenario;
        let sb = sc.network.base_power_mva;
        let mut inj = sc.network.load_injections(self.load_level(match &sc.load_curve {
            Some(curve) => curve.step_index(sc.start).unwrap_or(0),
            None => 0,
        }));
        for (k, c) in sc.components.iter().enumerate() {
            let add = match &c.model {
                ComponentModel::Cluster(m) => {
                    let (p, q) = m.cluster_output();
                    let n = m.cluster_count() as f64 * m.availability();
                    Complex64::new(n * p / sb, n * q / sb)
                }
                ComponentModel::Wind(w) => {
                    let pi = self.stationary[k].as_deref().unwrap_or(&[]);
                    pi.iter().zip(&w.output_states).fold(Complex64::new(0.0, 0.0), |acc, (p, o)| {
                        acc + Complex64::new(p * o.0, p * o.1)
                    })
                }
                ComponentModel::Bernoulli(b) => {
                    Complex64::new(b.probability * b.on_output.0 / sb, b.probability * b.on_output.1 / sb)
                }
            };
            inj[c.bus] += add;
        }
        inj
    }

    fn mean_steady_state(&self) -> Result<Vec<f64>, EngineError> {
        let sc = &self.scenario;
        let nl = sc.network.branches().len();
        let components: Vec<ComponentState> = sc
            .components
            .iter()
            .enumerate()
            .map(|(k, c)| match &c.model {
                ComponentModel::Wind(_) => {
                    let pi = self.stationary[k].as_deref().unwrap_or(&[]);
                    let mode = (0..pi.len()).max_by(|a, b| pi[*a].total_cmp(&pi[*b])).unwrap_or(0);
                    ComponentState::Wind { state: mode, next: f64::INFINITY, next_state: mode }
                }
                _ => ComponentState::Bernoulli { on: false, decided: true },
            })
            .collect();
        let mut state = SystemState {
            step: 0,
            clock: sc.start,
            weather: self.weather_of(&components),
            components,
            load_step: 0,
            temperatures: vec![sc.network.branches()[0].thermal.ref_temp; nl],
            currents: vec![0.0; nl],
            steady_levels: vec![0.0; nl],
            network: sc.network.clone(),
            solution: PowerFlowSolution::flat(&sc.network),
            rng: crate::rng::stream(0, 0, 0),
        };
        let inj = self.mean_injections();
        self.settle(&mut state, &inj)?;
        Ok(state.temperatures)
    }

    /// Fixed point of power flow and steady-state temperatures for fixed injections.
    fn settle(&self, state: &mut SystemState, inj: &[Complex64]) -> Result<(), EngineError> {
        for _ in 0..STEADY_STATE_SWEEPS {
            self.solve_with(state, inj)?;
            let mut delta: f64 = 0.0;
            for (l, br) in self.scenario.network.branches().iter().enumerate() {
                let t = steady_state_temperature_with(
                    Heating::Current(state.currents[l]),
                    &br.thermal,
                    &state.weather,
                    DEFAULT_TEMPERATURE_CAP,
                )?;
                delta = delta.max((t - state.temperatures[l]).abs());
                state.temperatures[l] = t;
            }
            if delta < STEADY_STATE_TOLERANCE {
                return Ok(());
            }
        }
        Ok(())
    }

    /// Refreshes resistances from temperatures and re-solves the power flow.
    pub fn refresh(&self, state: &mut SystemState) -> Result<(), EngineError> {
        let inj = self.injections(&state.components, state.load_step);
        self.solve_with(state, &inj)?;
        if self.track_steady_state {
            for (l, br) in self.scenario.network.branches().iter().enumerate() {
                state.steady_levels[l] = steady_state_temperature_with(
                    Heating::Current(state.currents[l]),
                    &br.thermal,
                    &state.weather,
                    DEFAULT_TEMPERATURE_CAP,
                )?;
            }
        }
        Ok(())
    }

    fn solve_with(&self, state: &mut SystemState, inj: &[Complex64]) -> Result<(), EngineError> {
        state.network.refresh_resistances(&state.temperatures)?;
        let sol = solve_power_flow(&state.network, inj, Some(&state.solution))?;
        let sb = state.network.base_power_mva;
        for (l, br) in state.network.branches().iter().enumerate() {
            let q = joule_w_per_m(&sol, br, sb);
            state.currents[l] = phase_current_from_loss(q, state.temperatures[l], &br.thermal);
        }
        state.solution = sol;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Pending {
    Load,
    Cluster(usize, usize),
    Wind(usize),
    Bernoulli(usize),
}

fn unit_state(up: bool) -> UnitState {
    if up {
        UnitState::Up
    } else {
        UnitState::Down
    }
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len().saturating_sub(1)
}
