//! Trajectory simulation and rare-event estimation on a thermal network.

mod estimate;
mod ladder;
mod pilot;
mod runner;
mod scenario;
mod simulator;

use thiserror::Error;

use crate::acpf::PowerFlowError;
use crate::stoch::StochError;
use crate::thermo::ThermoError;

pub use estimate::{
    crude_estimate, crude_relative_error, crude_sweep, estimate, restart_estimate,
    restart_relative_error, EstimationResult, EstimatorKind, RunOptions, StoppingRule, TracePoint,
    ABORT_TOLERANCE,
};
pub use ladder::{levels_for, quasi_optimal_retrials, ThresholdLadder, TARGET_STEP_PROBABILITY};
pub use pilot::{pilot_ladder, PilotConfig, PilotReport, PilotStage};
pub use runner::{HitCounting, TrialError, TrialOutcome, TrialRunner};
pub use scenario::{
    Component, ComponentModel, Coupling, InitialComponentState, InitialTemperatures, Monitor,
    MonitorKind, Scenario,
};
pub use simulator::{ComponentState, Simulator, SystemState};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid threshold ladder: {0}")]
    InvalidLadder(String),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Stoch(#[from] StochError),
    #[error("temperature of line {line} became non-finite at t = {time} s")]
    NonFiniteTemperature { line: usize, time: f64 },
    #[error("no hits in {trials} trials (probability likely below {upper_bound:.3e})")]
    ZeroHits { trials: u64, upper_bound: f64, simulated_seconds: f64 },
    #[error("initial level {initial} is already at or above the first threshold {first_threshold}")]
    LadderMismatch { initial: f64, first_threshold: f64 },
    #[error("pilot run could not place thresholds: {0}")]
    InsufficientSignal(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("sweep failed: {0}")]
    Sweep(String),
}

impl EngineError {
    /// Errors that drop a single trial instead of stopping the run.
    pub fn aborts_trial(&self) -> bool {
        matches!(
            self,
            EngineError::PowerFlow(
                PowerFlowError::NonConvergence { .. } | PowerFlowError::SingularJacobian(_)
            )
        )
    }
}
