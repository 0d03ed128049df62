//! One main trial of the splitting scheme, run depth-first with an explicit
//! stack of snapshots so memory stays bounded by the number of levels.

use crate::rng::stream;

use super::ladder::ThresholdLadder;
use super::simulator::{Simulator, SystemState};
use super::EngineError;

/// What counts as a hit on the target level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HitCounting {
    /// A path stops at its first arrival on the target; each path hits at most once.
    #[default]
    FirstPassage,
    /// Every upward crossing of the target counts and the path runs to the end.
    Crossings,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialOutcome {
    /// chi: hits on the target summed over all paths of this trial.
    pub hits: u64,
    /// Integration steps over all paths of this trial.
    pub steps: u64,
    /// Deepest snapshot stack seen.
    pub max_frames: usize,
    /// Retrial paths launched.
    pub retrials: u64,
    /// Monitored level at the start of the main path.
    pub initial_level: f64,
    /// Maximum level reached by every recorded path.
    pub samples: Vec<f64>,
}

#[derive(Debug)]
pub enum TrialError {
    /// Power flow failed inside the trial; the trial is dropped.
    Aborted(EngineError),
    Fatal(EngineError),
}

impl From<EngineError> for TrialError {
    fn from(e: EngineError) -> Self {
        if e.aborts_trial() {
            TrialError::Aborted(e)
        } else {
            TrialError::Fatal(e)
        }
    }
}

#[derive(Debug, Clone)]
struct PathCtx {
    /// Level below which this retrial is discarded; `None` for the main path
    /// and for continuations of it.
    kill: Option<usize>,
    /// Highest level already accounted for on this path.
    accounted: usize,
    record: bool,
    max_level: f64,
}

struct SplitFrame {
    level: usize,
    snapshot: SystemState,
    remaining: u32,
    parent: PathCtx,
}

pub struct TrialRunner<'a> {
    pub sim: &'a Simulator,
    pub ladder: &'a ThresholdLadder,
    pub seed: u64,
    pub counting: HitCounting,
    /// Records the maximum level of the main path (`Some(0)`) or of retrials
    /// born at level `i` (`Some(i)`).
    pub record_level: Option<usize>,
}

impl TrialRunner<'_> {
    pub fn run(&self, trial: u64) -> Result<TrialOutcome, TrialError> {
        let sim = self.sim;
        let ladder = self.ladder;
        let monitor = ladder.monitor;
        let m = ladder.levels();

        let mut state = sim.initial_state(stream(self.seed, trial, 0))?;
        let initial_level = sim.level(&state, monitor);
        if m > 1 && ladder.region(initial_level) > 0 {
            return Err(TrialError::Fatal(EngineError::LadderMismatch {
                initial: initial_level,
                first_threshold: ladder.thresholds[1],
            }));
        }
        let mut out = TrialOutcome { initial_level, ..TrialOutcome::default() };
        let mut ctx = PathCtx {
            kill: None,
            accounted: 0,
            record: self.record_level == Some(0),
            max_level: initial_level,
        };
        let mut stack: Vec<SplitFrame> = Vec::with_capacity(m);
        let mut splits = 0u64;

        loop {
            let level = sim.level(&state, monitor);
            if ctx.record {
                ctx.max_level = ctx.max_level.max(level);
            }
            let region = ladder.region(level);
            if region < ctx.accounted {
                ctx.accounted = region;
            }
            if region > ctx.accounted {
                ctx.accounted += 1;
                let i = ctx.accounted;
                if i == m {
                    out.hits += 1;
                    if self.counting == HitCounting::Crossings {
                        continue;
                    }
                } else {
                    if ladder.retrials[i] > 1 {
                        let frame = SplitFrame {
                            level: i,
                            snapshot: state.clone(),
                            remaining: ladder.retrials[i] - 1,
                            parent: ctx.clone(),
                        };
                        stack.push(frame);
                        out.max_frames = out.max_frames.max(stack.len());
                        let top = stack.last_mut().expect("frame just pushed");
                        top.remaining -= 1;
                        splits += 1;
                        state = self.retrial_from(&top.snapshot, trial, splits);
                        ctx = self.retrial_ctx(i, level);
                        out.retrials += 1;
                    }
                    continue;
                }
            } else if !sim.is_finished(&state) {
                sim.step(&mut state)?;
                out.steps += 1;
                match ctx.kill {
                    Some(k) if sim.level(&state, monitor) < ladder.thresholds[k] => {}
                    _ => continue,
                }
            }

            // The current path is over.
            if ctx.record {
                out.samples.push(ctx.max_level);
            }
            match stack.last_mut() {
                None => break,
                Some(top) if top.remaining > 0 => {
                    top.remaining -= 1;
                    splits += 1;
                    let level = top.level;
                    let start = sim.level(&top.snapshot, monitor);
                    state = self.retrial_from(&top.snapshot, trial, splits);
                    ctx = self.retrial_ctx(level, start);
                    out.retrials += 1;
                }
                Some(_) => {
                    let frame = stack.pop().expect("non-empty stack");
                    state = frame.snapshot;
                    ctx = frame.parent;
                }
            }
        }
        Ok(out)
    }

    fn retrial_from(&self, snapshot: &SystemState, trial: u64, split: u64) -> SystemState {
        let mut s = snapshot.clone();
        s.rng = stream(self.seed, trial, split);
        self.sim.resample_pending(&mut s);
        s
    }

    fn retrial_ctx(&self, level: usize, start: f64) -> PathCtx {
        PathCtx {
            kill: Some(level),
            accounted: level,
            record: self.record_level == Some(level),
            max_level: start,
        }
    }
}
