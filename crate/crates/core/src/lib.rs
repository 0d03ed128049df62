//! Rare-event estimation of overhead-line overheating in power networks
//! with stochastic generation.

pub mod acpf;
pub mod config;
pub mod engine;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod stoch;
pub mod thermo;

pub use scalar::Real;

pub type ThermalLineParams = thermo::ThermalLineParams<f64>;
pub type Weather = thermo::Weather<f64>;
pub type LineTemperature = thermo::LineTemperature<f64>;
pub type NetworkModel = acpf::NetworkModel<f64>;
pub type Branch = acpf::Branch<f64>;
pub type BusSpec = acpf::BusSpec<f64>;
pub type PowerFlowSolution = acpf::PowerFlowSolution<f64>;
