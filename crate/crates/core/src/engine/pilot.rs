//! Threshold placement from short staged pilot runs.
//!
//! Stage 0 runs plain trials and records how high each path climbs. Each
//! later stage splits paths at the previous stage's e^-2 quantile and records
//! how high the retrials climb from there. Chaining the stages gives a rough
//! survival curve of the path maximum, which fixes the number of levels and
//! places the thresholds at equal survival ratios.

use super::estimate::drive;
use super::ladder::{levels_for, ThresholdLadder, TARGET_STEP_PROBABILITY};
use super::runner::{HitCounting, TrialError, TrialRunner};
use super::scenario::Monitor;
use super::simulator::Simulator;
use super::EngineError;
use crate::rng::PILOT_SALT;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotConfig {
    /// Samples gathered per stage.
    pub samples: usize,
    /// Retrials launched at the newest stage threshold.
    pub stage_retrials: u32,
    /// Retrials at earlier stage thresholds.
    pub inner_retrials: u32,
    pub max_stages: usize,
    /// Fewest samples above the current base needed to place the next threshold.
    pub min_tail: usize,
    /// Main trials per stage before giving up on collecting samples.
    pub max_trials_per_stage: u64,
    pub threads: usize,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            stage_retrials: 8,
            inner_retrials: 7,
            max_stages: 30,
            min_tail: 10,
            max_trials_per_stage: 200_000,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotStage {
    pub base: f64,
    /// Log of the estimated probability of reaching `base`.
    pub log_survival: f64,
    /// Recorded path maxima, sorted descending.
    pub samples: Vec<f64>,
}

impl PilotStage {
    fn fraction_at_least(&self, level: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let n = self.samples.partition_point(|s| *s >= level);
        n as f64 / self.samples.len() as f64
    }

    /// Level exceeded by roughly a fraction `f` of the samples.
    fn quantile(&self, f: f64) -> f64 {
        let n = self.samples.len();
        let j = ((f * n as f64).ceil() as usize).clamp(1, n) - 1;
        self.samples[j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotReport {
    pub ladder: ThresholdLadder,
    pub gamma_rough: f64,
    pub stages: Vec<PilotStage>,
    pub simulated_seconds: f64,
}

struct Survival<'a> {
    stages: &'a [PilotStage],
}

impl Survival<'_> {
    fn log_at(&self, level: f64) -> f64 {
        let k = self.stages.partition_point(|s| s.base <= level).saturating_sub(1);
        let s = &self.stages[k];
        s.log_survival + s.fraction_at_least(level).ln()
    }
}

fn run_stage(
    sim: &Simulator,
    ladder: &ThresholdLadder,
    record: usize,
    seed: u64,
    cfg: &PilotConfig,
    steps: &mut u64,
    initial: &mut Vec<f64>,
) -> Result<Vec<f64>, EngineError> {
    let runner = TrialRunner { sim, ladder, seed, counting: HitCounting::FirstPassage, record_level: Some(record) };
    let mut samples = Vec::new();
    drive(cfg.threads, None, |t| runner.run(t), |trial, outcome, _| {
        match outcome {
            Ok(o) => {
                *steps += o.steps;
                initial.push(o.initial_level);
                samples.extend(o.samples);
            }
            Err(TrialError::Aborted(_)) => {}
            Err(TrialError::Fatal(e)) => return Err(e),
        }
        Ok(samples.len() >= cfg.samples || trial + 1 >= cfg.max_trials_per_stage)
    })?;
    samples.sort_by(|a, b| b.total_cmp(a));
    log::debug!(
        "pilot stage at level {record}: {} samples, top {:?}",
        samples.len(),
        samples.first()
    );
    Ok(samples)
}

/// Runs the staged pilot and returns a ladder ending at `target`.
pub fn pilot_ladder(
    sim: &Simulator,
    monitor: Monitor,
    target: f64,
    cfg: &PilotConfig,
    seed: u64,
) -> Result<PilotReport, EngineError> {
    let mut steps = 0u64;
    let mut initial = Vec::new();
    let stage0 = ThresholdLadder::crude(monitor, 0.0, target)?;
    let samples = run_stage(sim, &stage0, 0, seed ^ PILOT_SALT, cfg, &mut steps, &mut initial)?;
    let base = initial.iter().copied().fold(f64::INFINITY, f64::min);
    let top_initial = initial.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !base.is_finite() {
        return Err(EngineError::InsufficientSignal("every pilot trial aborted".into()));
    }
    let mut stages = vec![PilotStage { base, log_survival: 0.0, samples }];
    let mut floor = top_initial;

    loop {
        let stage = stages.last().expect("at least one stage");
        let reach = stage.fraction_at_least(target);
        if reach >= TARGET_STEP_PROBABILITY || reach * stage.samples.len() as f64 >= cfg.min_tail as f64 * 4.0 {
            break;
        }
        if stages.len() > cfg.max_stages {
            return Err(EngineError::InsufficientSignal(format!(
                "target not reached after {} pilot stages",
                cfg.max_stages
            )));
        }
        let above = stage.samples.iter().filter(|s| **s > floor).count();
        if above < cfg.min_tail {
            return Err(EngineError::InsufficientSignal(format!(
                "only {above} of {} pilot samples rose above {floor:.3}",
                stage.samples.len()
            )));
        }
        let mut next = stage.quantile(TARGET_STEP_PROBABILITY);
        if next <= floor {
            next = *stage.samples[..above].last().expect("non-empty tail");
        }
        if next >= target {
            break;
        }
        let log_survival = stage.log_survival + stage.fraction_at_least(next).ln();
        floor = next;

        let mut thresholds = vec![base];
        thresholds.extend(stages[1..].iter().map(|s| s.base));
        thresholds.push(next);
        thresholds.push(target);
        let k = thresholds.len() - 2;
        let mut retrials = vec![1u32];
        retrials.extend(std::iter::repeat_n(cfg.inner_retrials.max(1), k - 1));
        retrials.push(cfg.stage_retrials.max(2));
        let ladder = ThresholdLadder::new(monitor, thresholds, retrials, Vec::new())?;
        let salt = PILOT_SALT.wrapping_add(k as u64).rotate_left(17);
        let samples = run_stage(sim, &ladder, k, seed ^ salt, cfg, &mut steps, &mut Vec::new())?;
        if samples.len() < cfg.min_tail {
            return Err(EngineError::InsufficientSignal(format!(
                "pilot stage {k} produced {} samples",
                samples.len()
            )));
        }
        stages.push(PilotStage { base: next, log_survival, samples });
    }

    let last = stages.last().expect("at least one stage");
    let log_gamma = last.log_survival + last.fraction_at_least(target).ln();
    let gamma_rough = log_gamma.exp();
    let m = levels_for(gamma_rough);
    let survival = Survival { stages: &stages };

    let mut thresholds = vec![base.min(top_initial)];
    let mut log_s = vec![0.0];
    for i in 1..m {
        let goal = log_gamma * i as f64 / m as f64;
        let k = stages.iter().rposition(|s| s.log_survival >= goal).unwrap_or(0);
        let s = &stages[k];
        let candidate = s.quantile((goal - s.log_survival).exp());
        let prev = *thresholds.last().expect("base present");
        if candidate > prev && candidate > top_initial && candidate < target {
            log_s.push(survival.log_at(candidate));
            thresholds.push(candidate);
        }
    }
    thresholds.push(target);
    log_s.push(log_gamma);
    if thresholds[0] >= target {
        thresholds[0] = target - 1.0;
    }
    let p: Vec<f64> = log_s.windows(2).map(|w| (w[1] - w[0]).exp().min(1.0)).collect();
    let ladder = ThresholdLadder::with_probabilities(monitor, thresholds, p)?;
    Ok(PilotReport { ladder, gamma_rough, stages, simulated_seconds: steps as f64 * sim.scenario().dt })
}
