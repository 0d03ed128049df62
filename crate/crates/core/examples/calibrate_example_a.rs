//! Finds the base voltage that puts the Example A line at 338.95 K under the
//! mean 30 MW injection.
//!
//! cargo run --release --example calibrate_example_a -- configs/example_a.cfg

use anyhow::{Context, Result};
use linetemp::config::load_scenario;
use linetemp::engine::Simulator;
use linetemp::rng::stream;

const TARGET_K: f64 = 338.95;

fn steady_temperature(cfg: &linetemp::config::ScenarioConfig, kv: f64) -> Result<f64> {
    let mut cfg = cfg.clone();
    cfg.network.base_voltage_kv = Some(kv);
    let sim = Simulator::new(cfg.to_scenario()?)?;
    let state = sim.initial_state(stream(0, 0, 0))?;
    Ok(state.temperatures[0])
}

fn main() -> Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "configs/example_a.cfg".into());
    let cfg = load_scenario(&path).with_context(|| format!("loading {path}"))?;
    let (mut lo, mut hi) = (5.0_f64, 500.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // Higher voltage carries the same power with less current.
        if steady_temperature(&cfg, mid)? > TARGET_K {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let kv = 0.5 * (lo + hi);
    println!("base_voltage_kv = {kv:.6}");
    println!("steady state    = {:.6} K", steady_temperature(&cfg, kv)?);
    Ok(())
}
