//! Scenario builders shared by the integration tests.
#![allow(dead_code)]

use linetemp::config::{load_scenario, ScenarioConfig};
use linetemp::engine::*;
use linetemp::rng::stream;
use linetemp::stoch::{BernoulliSwitch, TwoStateCluster};
use linetemp::thermo::{steady_state_temperature, Weather};

pub const HOUR: f64 = 3600.0;

pub fn config(name: &str) -> ScenarioConfig {
    load_scenario(format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

pub fn example_a() -> ScenarioConfig {
    let mut cfg = config("example_a.cfg");
    cfg.sweep = None;
    cfg
}

/// Example A with the given fluctuation frequency (h⁻¹) and cluster size.
pub fn example_a_variant(frequency_per_h: f64, cluster_size: usize) -> Simulator {
    let mut cfg = example_a();
    cfg.clusters[0].frequency_per_h = Some(frequency_per_h);
    cfg.clusters[0].cluster_size = cluster_size;
    Simulator::new(cfg.to_scenario().unwrap()).unwrap()
}

pub fn example_b() -> Simulator {
    Simulator::new(config("example_b.cfg").to_scenario().unwrap()).unwrap()
}

pub fn opts(seed: u64, epsilon: f64, max_trials: u64) -> RunOptions {
    RunOptions {
        seed,
        threads: 1,
        stopping: StoppingRule { epsilon, min_trials: 100, max_trials, max_wall: None },
        counting: HitCounting::FirstPassage,
    }
}

/// The Example A line with no stochastic components, a one-hour window and
/// the conductor resting at its zero-current steady state.
pub fn toy_base() -> (Scenario, f64) {
    let mut sc = example_a().to_scenario().unwrap();
    sc.components.clear();
    sc.load_curve = None;
    sc.start = 0.0;
    sc.end = HOUR;
    let t0 = steady_state_temperature(0.0, &sc.network.branches()[0].thermal, &Weather::calm()).unwrap();
    sc.initial_temperatures = InitialTemperatures::Fixed(vec![t0]);
    (sc, t0)
}

pub const TOY_OUTPUT_MW: f64 = 40.0;
pub const TOY_THRESHOLD: f64 = 333.15;

fn generator_bus(sc: &Scenario) -> usize {
    sc.network.bus_index(1).unwrap()
}

/// Grid steps a 40 MW injection needs to heat the resting line to the toy threshold.
pub fn toy_heating_steps() -> u64 {
    let sim = Simulator::new(unit_toy_scenario(1e-3, 0)).unwrap();
    let mut s = sim.initial_state(stream(0, 0, 0)).unwrap();
    let mut k = 0;
    while s.temperatures[0] < TOY_THRESHOLD {
        sim.step(&mut s).unwrap();
        k += 1;
        assert!(!sim.is_finished(&s), "toy line never reaches the threshold");
    }
    k
}

/// One 40 MW unit that never fails in practice; `down` = 1 starts it down
/// with repair rate `repair_rate` (s⁻¹).
pub fn unit_toy_scenario(repair_rate: f64, down: usize) -> Scenario {
    let (mut sc, _) = toy_base();
    let unit = TwoStateCluster::new(1, 1, TOY_OUTPUT_MW, 0.0, 1e-12, repair_rate).unwrap();
    sc.components.push(Component {
        name: "unit".into(),
        model: ComponentModel::Cluster(unit),
        bus: generator_bus(&sc),
        initial: InitialComponentState::ClustersDown(down),
    });
    sc
}

/// Unit starting down: the line reaches the threshold iff the repair lands
/// on a grid point early enough to leave `K` heating steps, so
/// gamma = 1 - exp(-mu (N - K) dt).
pub fn unit_toy(repair_rate: f64) -> (Simulator, f64) {
    let sc = unit_toy_scenario(repair_rate, 1);
    let n = sc.total_steps();
    let k = toy_heating_steps();
    let truth = 1.0 - (-repair_rate * (n - k) as f64 * sc.dt).exp();
    (Simulator::new(sc).unwrap(), truth)
}

/// A switch deciding at 10 min whether to inject 40 MW; gamma = p.
pub fn bernoulli_toy(p: f64) -> Simulator {
    let (mut sc, _) = toy_base();
    let bus = generator_bus(&sc);
    sc.components.push(Component {
        name: "switch".into(),
        model: ComponentModel::Bernoulli(BernoulliSwitch::new(600.0, p, (TOY_OUTPUT_MW, 0.0)).unwrap()),
        bus,
        initial: InitialComponentState::Off,
    });
    Simulator::new(sc).unwrap()
}

/// Two-level ladder halfway between the resting temperature and the toy threshold.
pub fn toy_ladder(retrials: u32) -> ThresholdLadder {
    let (_, t0) = toy_base();
    let mid = 0.5 * (t0 + TOY_THRESHOLD);
    ThresholdLadder::new(Monitor::temperature(0), vec![t0 - 1.0, mid, TOY_THRESHOLD], vec![1, retrials], Vec::new()).unwrap()
}

/// Whether `value` lies within `k` standard errors of `truth`.
pub fn covers(r: &EstimationResult, truth: f64, k: f64) -> bool {
    let sigma = r.relative_error * r.gamma_hat;
    (r.gamma_hat - truth).abs() <= k * sigma
}

/// Combined k-sigma overlap of two estimates.
pub fn agree(a: &EstimationResult, b: &EstimationResult, k: f64) -> bool {
    let sa = a.relative_error * a.gamma_hat;
    let sb = b.relative_error * b.gamma_hat;
    (a.gamma_hat - b.gamma_hat).abs() <= k * (sa * sa + sb * sb).sqrt()
}
