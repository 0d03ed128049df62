use super::scenario::Monitor;
use super::EngineError;

/// Splitting probability each level is tuned towards.
pub const TARGET_STEP_PROBABILITY: f64 = 0.135_335_283_236_612_7; // e^-2

/// Thresholds T^0 < T^1 < ... < T^m on one monitored line, with the number
/// of retrials launched when a path first enters each level.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdLadder {
    pub monitor: Monitor,
    /// T^0..T^m; the last entry is the target.
    pub thresholds: Vec<f64>,
    /// n_1..n_m; n_1 is always 1.
    pub retrials: Vec<u32>,
    /// Estimated conditional probabilities p_1..p_m, when known.
    pub step_probabilities: Vec<f64>,
}

impl ThresholdLadder {
    pub fn new(
        monitor: Monitor,
        thresholds: Vec<f64>,
        retrials: Vec<u32>,
        step_probabilities: Vec<f64>,
    ) -> Result<Self, EngineError> {
        let m = thresholds.len().saturating_sub(1);
        if m == 0 {
            return Err(EngineError::InvalidLadder("need at least T^0 and a target".into()));
        }
        if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EngineError::InvalidLadder("thresholds must be finite and strictly increasing".into()));
        }
        if retrials.len() != m || retrials[0] != 1 || retrials.iter().any(|n| *n == 0) {
            return Err(EngineError::InvalidLadder(format!(
                "need {m} retrial counts starting with 1, got {retrials:?}"
            )));
        }
        if !step_probabilities.is_empty() && step_probabilities.len() != m {
            return Err(EngineError::InvalidLadder("step probability count differs from level count".into()));
        }
        Ok(Self { monitor, thresholds, retrials, step_probabilities })
    }

    /// Single-level ladder: plain Monte Carlo on the target.
    pub fn crude(monitor: Monitor, base: f64, target: f64) -> Result<Self, EngineError> {
        Self::new(monitor, vec![base, target], vec![1], Vec::new())
    }

    /// Ladder with retrial counts derived from step probabilities.
    pub fn with_probabilities(
        monitor: Monitor,
        thresholds: Vec<f64>,
        step_probabilities: Vec<f64>,
    ) -> Result<Self, EngineError> {
        let retrials = quasi_optimal_retrials(&step_probabilities);
        Self::new(monitor, thresholds, retrials, step_probabilities)
    }

    /// Number of levels m.
    pub fn levels(&self) -> usize {
        self.thresholds.len() - 1
    }

    pub fn target(&self) -> f64 {
        self.thresholds[self.levels()]
    }

    pub fn base(&self) -> f64 {
        self.thresholds[0]
    }

    /// n_1 * ... * n_m.
    pub fn retrial_product(&self) -> f64 {
        self.retrials.iter().map(|&n| n as f64).product()
    }

    /// Highest i >= 1 with `level >= T^i`, or 0 below T^1.
    pub fn region(&self, level: f64) -> usize {
        self.thresholds[1..].partition_point(|t| *t <= level)
    }
}

/// Retrial counts n_i = round(sqrt(1 / (p_i p_{i+1}))) with p_{m+1} = 1,
/// n_1 = 1 and n_i >= 2 above the first level.
pub fn quasi_optimal_retrials(p: &[f64]) -> Vec<u32> {
    let m = p.len();
    (0..m)
        .map(|i| {
            if i == 0 {
                return 1;
            }
            let next = if i + 1 < m { p[i + 1] } else { 1.0 };
            let n = (1.0 / (p[i] * next)).sqrt().round();
            if n.is_finite() {
                (n as u32).max(2)
            } else {
                2
            }
        })
        .collect()
}

/// Number of levels that makes every step probability close to e^-2.
pub fn levels_for(gamma_rough: f64) -> usize {
    ((1.0 / gamma_rough).ln() / 2.0).ceil().max(1.0) as usize
}
