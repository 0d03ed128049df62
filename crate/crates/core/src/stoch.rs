//! Component state models: two-state generator clusters, the wind-farm
//! Markov chain, the stepped load curve and a scheduled Bernoulli switch.
//!
//! Rates are per second and times are seconds throughout.

use rand::distr::Open01;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochError {
    #[error("invalid component parameter `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("transition matrix is reducible")]
    Reducible,
    #[error("time {t} s outside the load curve [{start}, {end}] s")]
    OutOfHorizon { t: f64, start: f64, end: f64 },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> StochError {
    StochError::Invalid { field, reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnitState {
    Up,
    Down,
}

/// Inverse-transform exponential variate for a uniform draw `u` in (0, 1).
#[inline]
pub fn exponential_from_uniform(u: f64, rate: f64) -> f64 {
    -(1.0 - u).ln() / rate
}

#[inline]
pub fn sample_exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    exponential_from_uniform(u, rate)
}

/// Holding time in `state`: rate `failure_rate` while up, `repair_rate` while down.
pub fn sample_up_down_holding<R: Rng + ?Sized>(
    state: UnitState,
    failure_rate: f64,
    repair_rate: f64,
    rng: &mut R,
) -> f64 {
    match state {
        UnitState::Up => sample_exponential(failure_rate, rng),
        UnitState::Down => sample_exponential(repair_rate, rng),
    }
}

/// Mean number of up-down-up cycles per unit time.
pub fn transition_frequency(failure_rate: f64, repair_rate: f64) -> f64 {
    failure_rate * repair_rate / (failure_rate + repair_rate)
}

/// Rates giving frequency `f` at unit up/down ratio.
pub fn rates_for_target(frequency: f64) -> (f64, f64) {
    (2.0 * frequency, 2.0 * frequency)
}

/// Identical two-state units grouped into clusters that switch together.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStateCluster {
    pub unit_count: usize,
    pub cluster_size: usize,
    /// MW per unit while up.
    pub unit_p_mw: f64,
    /// MVAr per unit while up.
    pub unit_q_mvar: f64,
    /// Up to down, s⁻¹.
    pub failure_rate: f64,
    /// Down to up, s⁻¹.
    pub repair_rate: f64,
}

impl TwoStateCluster {
    pub fn new(
        unit_count: usize,
        cluster_size: usize,
        unit_p_mw: f64,
        unit_q_mvar: f64,
        failure_rate: f64,
        repair_rate: f64,
    ) -> Result<Self, StochError> {
        if !(failure_rate > 0.0 && failure_rate.is_finite()) {
            return Err(invalid("failure_rate", "must be positive"));
        }
        if !(repair_rate > 0.0 && repair_rate.is_finite()) {
            return Err(invalid("repair_rate", "must be positive"));
        }
        if cluster_size == 0 || unit_count == 0 || unit_count % cluster_size != 0 {
            return Err(invalid(
                "cluster_size",
                format!("{unit_count} units cannot form clusters of {cluster_size}"),
            ));
        }
        Ok(Self { unit_count, cluster_size, unit_p_mw, unit_q_mvar, failure_rate, repair_rate })
    }

    pub fn cluster_count(&self) -> usize {
        self.unit_count / self.cluster_size
    }

    pub fn transition_frequency(&self) -> f64 {
        transition_frequency(self.failure_rate, self.repair_rate)
    }

    /// Long-run probability that a cluster is up.
    pub fn availability(&self) -> f64 {
        self.repair_rate / (self.failure_rate + self.repair_rate)
    }

    pub fn rate(&self, state: UnitState) -> f64 {
        match state {
            UnitState::Up => self.failure_rate,
            UnitState::Down => self.repair_rate,
        }
    }

    /// Output of one cluster while up, (MW, MVAr).
    pub fn cluster_output(&self) -> (f64, f64) {
        let c = self.cluster_size as f64;
        (c * self.unit_p_mw, c * self.unit_q_mvar)
    }
}

/// Discrete-state wind farm output driven by a time-continuous Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct WindChain {
    /// Per-state (P, Q) output in p.u. of the system base.
    pub output_states: Vec<(f64, f64)>,
    /// Row-stochastic transition matrix at the sampling frequency.
    pub transition_matrix: Vec<Vec<f64>>,
    /// State sampling frequency, s⁻¹.
    pub sampling_frequency: f64,
    /// Convective cooling coefficient tied to each state, W m⁻¹ K⁻¹.
    pub coupled_conv_coeff: Vec<f64>,
}

/// Row corrections applied while building a [`WindChain`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Renormalization {
    /// (row, original sum) for every row that was rescaled.
    pub rows: Vec<(usize, f64)>,
}

impl WindChain {
    /// Validates the chain and rescales rows that do not sum exactly to one.
    pub fn new(
        output_states: Vec<(f64, f64)>,
        mut transition_matrix: Vec<Vec<f64>>,
        sampling_frequency: f64,
        coupled_conv_coeff: Vec<f64>,
    ) -> Result<(Self, Renormalization), StochError> {
        let n = output_states.len();
        if n == 0 {
            return Err(invalid("output_states", "at least one state required"));
        }
        if transition_matrix.len() != n || transition_matrix.iter().any(|r| r.len() != n) {
            return Err(invalid("transition_matrix", format!("must be {n}x{n}")));
        }
        if !coupled_conv_coeff.is_empty() && coupled_conv_coeff.len() != n {
            return Err(invalid("coupled_conv_coeff", format!("expected {n} entries")));
        }
        if coupled_conv_coeff.iter().any(|a| !(*a > 0.0)) {
            return Err(invalid("coupled_conv_coeff", "must be positive"));
        }
        if !(sampling_frequency > 0.0 && sampling_frequency.is_finite()) {
            return Err(invalid("sampling_frequency", "must be positive"));
        }
        let mut fix = Renormalization::default();
        for (i, row) in transition_matrix.iter_mut().enumerate() {
            if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(invalid("transition_matrix", format!("row {} has a negative entry", i + 1)));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-3 {
                return Err(invalid(
                    "transition_matrix",
                    format!("row {} sums to {sum}, not 1 within 1e-3", i + 1),
                ));
            }
            if (sum - 1.0).abs() > 1e-12 {
                row.iter_mut().for_each(|p| *p /= sum);
                fix.rows.push((i, sum));
            }
            if !(row[i] > 0.0 && row[i] < 1.0) {
                return Err(invalid(
                    "transition_matrix",
                    format!("diagonal entry of row {} must lie in (0, 1)", i + 1),
                ));
            }
        }
        Ok((Self { output_states, transition_matrix, sampling_frequency, coupled_conv_coeff }, fix))
    }

    pub fn state_count(&self) -> usize {
        self.output_states.len()
    }

    /// Mean holding time of `state`, s.
    pub fn mean_holding_time(&self, state: usize) -> f64 {
        1.0 / ((1.0 - self.transition_matrix[state][state]) * self.sampling_frequency)
    }

    /// Distribution of the next state given a jump out of `state`.
    pub fn jump_distribution(&self, state: usize) -> Vec<f64> {
        let stay = self.transition_matrix[state][state];
        self.transition_matrix[state]
            .iter()
            .enumerate()
            .map(|(j, &p)| if j == state { 0.0 } else { p / (1.0 - stay) })
            .collect()
    }

    /// Samples the next state without holding time. Never returns `state`.
    pub fn sample_jump<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let row = &self.transition_matrix[state];
        let stay = row[state];
        let u: f64 = rng.random::<f64>() * (1.0 - stay);
        let mut acc = 0.0;
        let mut last = state;
        for (j, &p) in row.iter().enumerate() {
            if j == state || p == 0.0 {
                continue;
            }
            acc += p;
            last = j;
            if u < acc {
                return j;
            }
        }
        last
    }

    pub fn conv_coeff(&self, state: usize) -> Option<f64> {
        self.coupled_conv_coeff.get(state).copied()
    }
}

/// A scheduled state change of one component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentEvent {
    pub time: f64,
    pub component: usize,
    pub new_state: usize,
}

/// Holding time in the current wind state and the state entered afterwards.
pub fn wind_next<R: Rng + ?Sized>(
    chain: &WindChain,
    component: usize,
    state: usize,
    now: f64,
    rng: &mut R,
) -> ComponentEvent {
    let hold = sample_exponential(1.0 / chain.mean_holding_time(state), rng);
    let next = chain.sample_jump(state, rng);
    ComponentEvent { time: now + hold, component, new_state: next }
}

/// Stationary distribution of the chain (πP = π) by power iteration.
pub fn stationary_distribution(chain: &WindChain) -> Result<Vec<f64>, StochError> {
    stationary_of(&chain.transition_matrix)
}

pub fn stationary_of(matrix: &[Vec<f64>]) -> Result<Vec<f64>, StochError> {
    let n = matrix.len();
    if !irreducible(matrix) {
        return Err(StochError::Reducible);
    }
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..1_000_000 {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, row) in matrix.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                next[j] += pi[i] * p;
            }
        }
        // Lazy step keeps the iteration convergent for periodic chains.
        for (x, p) in next.iter_mut().zip(&pi) {
            *x = 0.5 * (*x + p);
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if residual < 1e-15 {
            break;
        }
    }
    Ok(pi)
}

fn irreducible(matrix: &[Vec<f64>]) -> bool {
    let n = matrix.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let p = if forward { matrix[i][j] } else { matrix[j][i] };
                if p > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    n > 0 && reach(true) && reach(false)
}

/// Stepwise-constant load level, right-continuous at breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadCurve {
    /// (start time s, level fraction), strictly increasing in time.
    steps: Vec<(f64, f64)>,
    end: f64,
}

impl LoadCurve {
    pub fn new(steps: Vec<(f64, f64)>, end: f64) -> Result<Self, StochError> {
        if steps.is_empty() {
            return Err(invalid("load_curve", "no steps"));
        }
        for w in steps.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(invalid("load_curve", "breakpoints must be strictly increasing"));
            }
        }
        if !(end > steps[steps.len() - 1].0) {
            return Err(invalid("load_curve", "end must follow the last breakpoint"));
        }
        if steps.iter().any(|&(_, l)| !(l > 0.0 && l <= 1.0)) {
            return Err(invalid("load_curve", "levels must lie in (0, 1]"));
        }
        Ok(Self { steps, end })
    }

    /// Hourly steps starting at t = 0.
    pub fn hourly(levels: &[f64]) -> Result<Self, StochError> {
        let steps = levels.iter().enumerate().map(|(h, &l)| (h as f64 * 3600.0, l)).collect();
        Self::new(steps, levels.len() as f64 * 3600.0)
    }

    pub fn steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// Index of the step containing `t`.
    pub fn step_index(&self, t: f64) -> Result<usize, StochError> {
        let start = self.steps[0].0;
        if t < start || t > self.end {
            return Err(StochError::OutOfHorizon { t, start, end: self.end });
        }
        Ok(self.steps.partition_point(|&(s, _)| s <= t) - 1)
    }

    pub fn level_at(&self, t: f64) -> Result<f64, StochError> {
        self.step_index(t).map(|i| self.steps[i].1)
    }

    /// Start time of the step following `index`, if any.
    pub fn next_breakpoint(&self, index: usize) -> Option<f64> {
        self.steps.get(index + 1).map(|s| s.0)
    }
}

pub fn load_level_at(t: f64, curve: &LoadCurve) -> Result<f64, StochError> {
    curve.level_at(t)
}

/// Switches on at a fixed time with a fixed probability and stays in that state.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliSwitch {
    /// Decision time, s.
    pub at_time: f64,
    pub probability: f64,
    /// Output while on, (MW, MVAr).
    pub on_output: (f64, f64),
}

impl BernoulliSwitch {
    pub fn new(at_time: f64, probability: f64, on_output: (f64, f64)) -> Result<Self, StochError> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(invalid("probability", "must lie in [0, 1]"));
        }
        if !at_time.is_finite() {
            return Err(invalid("at_time", "must be finite"));
        }
        Ok(Self { at_time, probability, on_output })
    }
}
