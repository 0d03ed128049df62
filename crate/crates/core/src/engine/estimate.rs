//! Trial loops for the crude and splitting estimators.
//!
//! Trials run in parallel batches but are folded strictly in trial order and
//! the stopping rule is checked after every trial, so the result for a given
//! seed does not depend on the thread count.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::rng::stream;

use super::ladder::ThresholdLadder;
use super::runner::{HitCounting, TrialError, TrialOutcome, TrialRunner};
use super::scenario::Monitor;
use super::simulator::Simulator;
use super::EngineError;

/// Share of aborted trials above which a result is flagged invalid.
pub const ABORT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    /// Target relative error.
    pub epsilon: f64,
    /// Trials always run before the relative error is trusted.
    pub min_trials: u64,
    pub max_trials: u64,
    pub max_wall: Option<Duration>,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self { epsilon: 0.05, min_trials: 100, max_trials: 10_000_000, max_wall: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub threads: usize,
    pub stopping: StoppingRule,
    pub counting: HitCounting,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { seed: 1, threads: 1, stopping: StoppingRule::default(), counting: HitCounting::FirstPassage }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Crude,
    Restart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub trial: u64,
    pub elapsed_s: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub kind: EstimatorKind,
    pub monitor: Monitor,
    pub target: f64,
    pub gamma_hat: f64,
    pub relative_error: f64,
    /// Completed main trials N.
    pub trials: u64,
    /// Sum of chi over all trials.
    pub hits: u64,
    pub sum_gamma_k: f64,
    pub sum_gamma_k_sq: f64,
    pub levels: usize,
    pub retrial_product: f64,
    pub retrials: u64,
    pub aborted: u64,
    /// Set when more than 0.1% of trials aborted.
    pub invalid: bool,
    pub met_epsilon: bool,
    /// Simulated time over every path, s.
    pub simulated_seconds: f64,
    pub max_live_frames: usize,
    pub wall_seconds: f64,
    pub trace: Vec<TracePoint>,
}

impl EstimationResult {
    /// Equality of everything except wall-clock measurements.
    pub fn same_estimate(&self, other: &Self) -> bool {
        let strip = |r: &Self| {
            let mut r = r.clone();
            r.wall_seconds = 0.0;
            r.trace.iter_mut().for_each(|p| p.elapsed_s = 0.0);
            r
        };
        strip(self) == strip(other)
    }
}

/// Relative error of plain Monte Carlo: sqrt((1 - g) / (N g)).
pub fn crude_relative_error(gamma: f64, trials: u64) -> f64 {
    if gamma <= 0.0 || trials == 0 {
        return f64::INFINITY;
    }
    ((1.0 - gamma) / (trials as f64 * gamma)).sqrt()
}

/// Empirical relative error of the splitting estimator from per-trial estimates.
pub fn restart_relative_error(sum: f64, sum_sq: f64, trials: u64) -> f64 {
    if sum <= 0.0 || trials == 0 {
        return f64::INFINITY;
    }
    let n = trials as f64;
    let g = sum / n;
    (sum_sq - n * g * g).max(0.0).sqrt() / (n * g)
}

struct Accumulator {
    kind: EstimatorKind,
    product: f64,
    trials: u64,
    aborted: u64,
    hits: u64,
    sum: f64,
    sum_sq: f64,
    steps: u64,
    frames: usize,
    retrials: u64,
    trace: Vec<TracePoint>,
}

impl Accumulator {
    fn new(kind: EstimatorKind, product: f64) -> Self {
        Self {
            kind,
            product,
            trials: 0,
            aborted: 0,
            hits: 0,
            sum: 0.0,
            sum_sq: 0.0,
            steps: 0,
            frames: 0,
            retrials: 0,
            trace: Vec::new(),
        }
    }

    fn gamma(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        match self.kind {
            EstimatorKind::Crude => self.hits as f64 / self.trials as f64,
            EstimatorKind::Restart => self.hits as f64 / (self.trials as f64 * self.product),
        }
    }

    fn relative_error(&self) -> f64 {
        match self.kind {
            EstimatorKind::Crude => crude_relative_error(self.gamma(), self.trials),
            EstimatorKind::Restart => restart_relative_error(self.sum, self.sum_sq, self.trials),
        }
    }

    fn add(&mut self, trial: u64, outcome: &TrialOutcome, elapsed: f64) {
        self.trials += 1;
        self.hits += outcome.hits;
        let g = outcome.hits as f64 / self.product;
        self.sum += g;
        self.sum_sq += g * g;
        self.steps += outcome.steps;
        self.frames = self.frames.max(outcome.max_frames);
        self.retrials += outcome.retrials;
        self.trace.push(TracePoint { trial, elapsed_s: elapsed, relative_error: self.relative_error() });
    }

    fn converged(&self, rule: &StoppingRule) -> bool {
        self.trials >= rule.min_trials && self.hits > 0 && self.relative_error() < rule.epsilon
    }

    fn exhausted(&self, rule: &StoppingRule) -> bool {
        self.trials + self.aborted >= rule.max_trials
    }

    fn finish(self, monitor: Monitor, ladder: &ThresholdLadder, dt: f64, rule: &StoppingRule, wall: f64) -> Result<EstimationResult, EngineError> {
        let simulated_seconds = self.steps as f64 * dt;
        if self.hits == 0 {
            return Err(EngineError::ZeroHits {
                trials: self.trials,
                upper_bound: if self.trials > 0 { 1.0 / self.trials as f64 } else { 1.0 },
                simulated_seconds,
            });
        }
        let attempts = self.trials + self.aborted;
        Ok(EstimationResult {
            kind: self.kind,
            monitor,
            target: ladder.target(),
            gamma_hat: self.gamma(),
            relative_error: self.relative_error(),
            met_epsilon: self.converged(rule),
            trials: self.trials,
            hits: self.hits,
            sum_gamma_k: self.sum,
            sum_gamma_k_sq: self.sum_sq,
            levels: ladder.levels(),
            retrial_product: self.product,
            retrials: self.retrials,
            aborted: self.aborted,
            invalid: attempts > 0 && self.aborted as f64 > ABORT_TOLERANCE * attempts as f64,
            simulated_seconds,
            max_live_frames: self.frames,
            wall_seconds: wall,
            trace: self.trace,
        })
    }
}

/// Runs trials 0, 1, 2, ... in parallel batches and hands each result to
/// `fold` in index order until `fold` asks to stop.
pub(crate) fn drive<O, R, F>(threads: usize, max_wall: Option<Duration>, run: R, mut fold: F) -> Result<(), EngineError>
where
    O: Send,
    R: Fn(u64) -> O + Sync,
    F: FnMut(u64, O, f64) -> Result<bool, EngineError>,
{
    let threads = threads.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| EngineError::ThreadPool(e.to_string()))?;
    let batch = if threads == 1 { 1 } else { (threads as u64) * 4 };
    let started = Instant::now();
    let mut next = 0u64;
    loop {
        let outcomes: Vec<O> = if threads == 1 {
            vec![run(next)]
        } else {
            pool.install(|| (next..next + batch).into_par_iter().map(&run).collect())
        };
        let elapsed = started.elapsed().as_secs_f64();
        for (k, o) in outcomes.into_iter().enumerate() {
            if fold(next + k as u64, o, elapsed)? {
                return Ok(());
            }
        }
        next += batch;
        if max_wall.is_some_and(|w| started.elapsed() >= w) {
            return Ok(());
        }
    }
}

/// Estimates the probability that the monitored level reaches the ladder's
/// target within the window. A one-level ladder gives plain Monte Carlo.
pub fn estimate(sim: &Simulator, ladder: &ThresholdLadder, opts: &RunOptions) -> Result<EstimationResult, EngineError> {
    let kind = if ladder.levels() == 1 { EstimatorKind::Crude } else { EstimatorKind::Restart };
    let runner = TrialRunner { sim, ladder, seed: opts.seed, counting: opts.counting, record_level: None };
    let rule = opts.stopping;
    let mut acc = Accumulator::new(kind, ladder.retrial_product());
    let started = Instant::now();
    drive(opts.threads, rule.max_wall, |t| runner.run(t), |trial, outcome, elapsed| {
        match outcome {
            Ok(o) => acc.add(trial, &o, elapsed),
            Err(TrialError::Aborted(e)) => {
                log::warn!("trial {trial} aborted: {e}");
                acc.aborted += 1;
            }
            Err(TrialError::Fatal(e)) => return Err(e),
        }
        Ok(acc.converged(&rule) || acc.exhausted(&rule))
    })?;
    let wall = started.elapsed().as_secs_f64();
    acc.finish(ladder.monitor, ladder, sim.scenario().dt, &rule, wall)
}

pub fn crude_estimate(sim: &Simulator, monitor: Monitor, target: f64, opts: &RunOptions) -> Result<EstimationResult, EngineError> {
    let ladder = ThresholdLadder::crude(monitor, 0.0, target)?;
    estimate(sim, &ladder, opts)
}

pub fn restart_estimate(sim: &Simulator, ladder: &ThresholdLadder, opts: &RunOptions) -> Result<EstimationResult, EngineError> {
    let mut result = estimate(sim, ladder, opts)?;
    result.kind = EstimatorKind::Restart;
    Ok(result)
}

struct SweepOutcome {
    /// Step at which each pair first reached its threshold.
    first_hit: Vec<Option<u64>>,
    steps: u64,
    aborted: bool,
}

fn sweep_trial(sim: &Simulator, pairs: &[(Monitor, f64)], seed: u64, trial: u64) -> Result<SweepOutcome, EngineError> {
    let mut state = sim.initial_state(stream(seed, trial, 0))?;
    let mut first_hit = vec![None; pairs.len()];
    let mut steps = 0u64;
    loop {
        let mut pending = false;
        for (slot, (mon, thr)) in first_hit.iter_mut().zip(pairs) {
            if slot.is_none() {
                if sim.level(&state, *mon) >= *thr {
                    *slot = Some(steps);
                } else {
                    pending = true;
                }
            }
        }
        if !pending || sim.is_finished(&state) {
            break;
        }
        match sim.step(&mut state) {
            Ok(()) => steps += 1,
            Err(e) if e.aborts_trial() => return Ok(SweepOutcome { first_hit, steps, aborted: true }),
            Err(e) => return Err(e),
        }
    }
    Ok(SweepOutcome { first_hit, steps, aborted: false })
}

/// Plain Monte Carlo for many (monitor, threshold) pairs from one set of
/// trials. Each pair stops on its own rule, so its result equals a separate
/// `crude_estimate` with the same seed.
pub fn crude_sweep(sim: &Simulator, pairs: &[(Monitor, f64)], opts: &RunOptions) -> Vec<Result<EstimationResult, EngineError>> {
    let rule = opts.stopping;
    let ladders: Vec<Result<ThresholdLadder, EngineError>> =
        pairs.iter().map(|(m, t)| ThresholdLadder::crude(*m, 0.0, *t)).collect();
    let mut accs: Vec<Accumulator> = pairs.iter().map(|_| Accumulator::new(EstimatorKind::Crude, 1.0)).collect();
    let mut frozen: Vec<bool> = ladders.iter().map(|l| l.is_err()).collect();
    let started = Instant::now();
    let seed = opts.seed;
    let driven = drive(opts.threads, rule.max_wall, |t| sweep_trial(sim, pairs, seed, t), |trial, outcome, elapsed| {
        let o = outcome?;
        for (k, acc) in accs.iter_mut().enumerate() {
            if frozen[k] {
                continue;
            }
            match (o.first_hit[k], o.aborted) {
                (None, true) => acc.aborted += 1,
                (hit, _) => {
                    let t = TrialOutcome {
                        hits: hit.is_some() as u64,
                        steps: hit.unwrap_or(o.steps),
                        ..TrialOutcome::default()
                    };
                    acc.add(trial, &t, elapsed);
                }
            }
            if acc.converged(&rule) || acc.exhausted(&rule) {
                frozen[k] = true;
            }
        }
        Ok(frozen.iter().all(|f| *f))
    });
    let wall = started.elapsed().as_secs_f64();
    if let Err(e) = driven {
        let msg = e.to_string();
        return pairs.iter().map(|_| Err(EngineError::Sweep(msg.clone()))).collect();
    }
    let dt = sim.scenario().dt;
    accs.into_iter()
        .zip(ladders)
        .zip(pairs)
        .map(|((acc, ladder), (mon, _))| acc.finish(*mon, &ladder?, dt, &rule, wall))
        .collect()
}
