//! Study orchestration: runs the configured estimator for every (line,
//! threshold) pair and writes the summary table and the relative-error trace.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{ConfigError, Mode, ScenarioConfig};
use crate::engine::{
    crude_sweep, pilot_ladder, restart_estimate, EngineError, EstimationResult, Monitor,
    PilotConfig, RunOptions, Simulator, StoppingRule, ThresholdLadder, TracePoint,
};
use crate::rng::stream;
use crate::thermo::steady_state_ampacity;

/// Command-line overrides of the study section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub max_trials: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) -> Result<(), ConfigError> {
        let s = &mut cfg.study;
        if let Some(m) = self.mode {
            s.mode = m;
        }
        if let Some(e) = self.epsilon {
            s.epsilon = e;
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(t) = self.threads {
            s.threads = t;
        }
        if let Some(n) = self.max_trials {
            s.max_trials = n;
        }
        cfg.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub line: String,
    pub threshold_k: f64,
    pub mode: Mode,
    pub status: String,
    pub gamma_hat: f64,
    pub relative_error: f64,
    pub trials: u64,
    pub hits: u64,
    pub aborted: u64,
    pub levels: usize,
    pub simulated_s: f64,
    pub met_epsilon: bool,
    pub seed: u64,
    pub digest: String,
    pub wall_s: f64,
}

impl SummaryRow {
    pub const HEADER: [&'static str; 16] = [
        "scenario",
        "line",
        "threshold_k",
        "mode",
        "status",
        "gamma_hat",
        "relative_error",
        "trials",
        "hits",
        "aborted",
        "levels",
        "simulated_s",
        "met_epsilon",
        "seed",
        "digest",
        "wall_s",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            self.scenario.clone(),
            self.line.clone(),
            format!("{}", self.threshold_k),
            self.mode.to_string(),
            self.status.clone(),
            format!("{:e}", self.gamma_hat),
            format!("{}", self.relative_error),
            self.trials.to_string(),
            self.hits.to_string(),
            self.aborted.to_string(),
            self.levels.to_string(),
            format!("{}", self.simulated_s),
            self.met_epsilon.to_string(),
            self.seed.to_string(),
            self.digest.clone(),
            format!("{:.3}", self.wall_s),
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunArtifacts {
    pub rows: Vec<SummaryRow>,
    /// Relative-error trace of each summary row.
    pub traces: Vec<Vec<TracePoint>>,
}

impl RunArtifacts {
    /// True when every estimate reached its target accuracy.
    pub fn all_met(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.met_epsilon)
    }

    /// Writes `summary.tsv` and `trace.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let summary = dir.join("summary.tsv");
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_path(&summary)?;
        w.write_record(SummaryRow::HEADER)?;
        for r in &self.rows {
            w.write_record(r.record())?;
        }
        w.flush()?;

        let trace = dir.join("trace.tsv");
        let mut t = BufWriter::new(File::create(&trace)?);
        writeln!(t, "row\ttrial\telapsed_s\trelative_error")?;
        for (row, points) in self.traces.iter().enumerate() {
            for p in points {
                writeln!(t, "{row}\t{}\t{:.6}\t{}", p.trial, p.elapsed_s, p.relative_error)?;
            }
        }
        t.flush()?;
        Ok((summary, trace))
    }
}

pub fn worker_count(requested: usize) -> usize {
    if requested > 0 {
        return requested;
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn options(cfg: &ScenarioConfig) -> RunOptions {
    let s = &cfg.study;
    RunOptions {
        seed: s.seed,
        threads: worker_count(s.threads),
        stopping: StoppingRule {
            epsilon: s.epsilon,
            min_trials: s.min_trials,
            max_trials: s.max_trials,
            max_wall: s.max_wall_s.map(std::time::Duration::from_secs_f64),
        },
        counting: cfg.counting(),
    }
}

fn pilot_config(cfg: &ScenarioConfig) -> PilotConfig {
    PilotConfig {
        samples: cfg.study.pilot_trials,
        threads: worker_count(cfg.study.threads),
        ..PilotConfig::default()
    }
}

fn simulator(cfg: &ScenarioConfig) -> Result<Simulator, EngineError> {
    let scenario = cfg.to_scenario().map_err(|e| EngineError::InvalidScenario(e.to_string()))?;
    Ok(Simulator::new(scenario)?.with_steady_state_tracking(cfg.study.mode == Mode::SteadyState))
}

struct RowContext<'a> {
    label: &'a str,
    line: &'a str,
    threshold: f64,
    mode: Mode,
    seed: u64,
    digest: &'a str,
}

fn row_from(ctx: RowContext<'_>, result: Result<EstimationResult, EngineError>) -> (SummaryRow, Vec<TracePoint>) {
    let mut row = SummaryRow {
        scenario: ctx.label.to_string(),
        line: ctx.line.to_string(),
        threshold_k: ctx.threshold,
        mode: ctx.mode,
        status: "ok".into(),
        gamma_hat: f64::NAN,
        relative_error: f64::NAN,
        trials: 0,
        hits: 0,
        aborted: 0,
        levels: 0,
        simulated_s: 0.0,
        met_epsilon: false,
        seed: ctx.seed,
        digest: ctx.digest.to_string(),
        wall_s: 0.0,
    };
    match result {
        Ok(r) => {
            row.gamma_hat = r.gamma_hat;
            row.relative_error = r.relative_error;
            row.trials = r.trials;
            row.hits = r.hits;
            row.aborted = r.aborted;
            row.levels = r.levels;
            row.simulated_s = r.simulated_seconds;
            row.met_epsilon = r.met_epsilon && !r.invalid;
            row.wall_s = r.wall_seconds;
            if r.invalid {
                row.status = "invalid".into();
            } else if !r.met_epsilon {
                row.status = "not-converged".into();
            }
            (row, r.trace)
        }
        Err(EngineError::ZeroHits { trials, upper_bound, simulated_seconds }) => {
            row.status = format!("zero-hits (below {upper_bound:.2e})");
            row.gamma_hat = 0.0;
            row.relative_error = f64::INFINITY;
            row.trials = trials;
            row.simulated_s = simulated_seconds;
            (row, Vec::new())
        }
        Err(e) => {
            row.status = format!("error: {e}");
            (row, Vec::new())
        }
    }
}

/// Pilot-calibrated splitting estimate for one pair.
pub fn calibrated_estimate(
    sim: &Simulator,
    monitor: Monitor,
    threshold: f64,
    pilot: &PilotConfig,
    opts: &RunOptions,
) -> Result<EstimationResult, EngineError> {
    let report = pilot_ladder(sim, monitor, threshold, pilot, opts.seed)?;
    log::info!(
        "ladder for line {} at {threshold:.2} K: {:?} with retrials {:?} (rough {:.3e})",
        monitor.line,
        report.ladder.thresholds,
        report.ladder.retrials,
        report.gamma_rough
    );
    restart_estimate(sim, &report.ladder, opts)
}

/// Runs the configured study over every sweep point, line and threshold.
pub fn run(cfg: &ScenarioConfig) -> RunArtifacts {
    let mut art = RunArtifacts::default();
    for (label, variant) in cfg.variants() {
        let digest = variant.digest();
        let opts = options(&variant);
        let mode = variant.study.mode;
        let thresholds: Vec<f64> = variant.study.thresholds.iter().map(|k| k.0).collect();
        let sim = match simulator(&variant) {
            Ok(sim) => sim,
            Err(e) => {
                for line in &variant.study.lines {
                    for &t in &thresholds {
                        let ctx = RowContext { label: &label, line, threshold: t, mode, seed: opts.seed, digest: &digest };
                        let (row, trace) = row_from(ctx, Err(EngineError::InvalidScenario(e.to_string())));
                        art.rows.push(row);
                        art.traces.push(trace);
                    }
                }
                continue;
            }
        };
        let monitors = variant.monitors(sim.scenario());
        let pairs: Vec<(String, Monitor, f64)> = monitors
            .iter()
            .flat_map(|(name, m)| thresholds.iter().map(move |t| (name.clone(), *m, *t)))
            .collect();
        let results: Vec<Result<EstimationResult, EngineError>> = match mode {
            Mode::Crude => {
                let p: Vec<(Monitor, f64)> = pairs.iter().map(|(_, m, t)| (*m, *t)).collect();
                crude_sweep(&sim, &p, &opts)
            }
            Mode::Restart | Mode::SteadyState => {
                let pilot = pilot_config(&variant);
                pairs.iter().map(|(_, m, t)| calibrated_estimate(&sim, *m, *t, &pilot, &opts)).collect()
            }
        };
        for ((line, _, t), result) in pairs.iter().zip(results) {
            let ctx = RowContext { label: &label, line, threshold: *t, mode, seed: opts.seed, digest: &digest };
            let (row, trace) = row_from(ctx, result);
            log::info!("{} {} {:.2} K: {} gamma={:e} RE={}", row.scenario, row.line, row.threshold_k, row.status, row.gamma_hat, row.relative_error);
            art.rows.push(row);
            art.traces.push(trace);
        }
    }
    art
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderRow {
    pub scenario: String,
    pub line: String,
    pub result: Result<(ThresholdLadder, f64), String>,
}

/// Runs only the pilot stage for every pair and returns the ladders.
pub fn pilot(cfg: &ScenarioConfig) -> Vec<LadderRow> {
    let mut rows = Vec::new();
    for (label, variant) in cfg.variants() {
        let sim = match simulator(&variant) {
            Ok(s) => s,
            Err(e) => {
                rows.push(LadderRow { scenario: label.clone(), line: String::new(), result: Err(e.to_string()) });
                continue;
            }
        };
        let pilot = pilot_config(&variant);
        for (line, m) in variant.monitors(sim.scenario()) {
            for t in &variant.study.thresholds {
                let result = pilot_ladder(&sim, m, t.0, &pilot, variant.study.seed)
                    .map(|r| (r.ladder, r.gamma_rough))
                    .map_err(|e| e.to_string());
                rows.push(LadderRow { scenario: label.clone(), line: line.clone(), result });
            }
        }
    }
    rows
}

pub fn write_ladders(rows: &[LadderRow], dir: &Path) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("ladders.tsv");
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').flexible(true).from_path(&path)?;
    w.write_record(["scenario", "line", "status", "gamma_rough", "thresholds_k", "retrials", "step_probabilities"])?;
    for r in rows {
        match &r.result {
            Ok((ladder, g)) => {
                let join = |v: Vec<String>| v.join(",");
                w.write_record([
                    r.scenario.clone(),
                    r.line.clone(),
                    "ok".into(),
                    format!("{g:e}"),
                    join(ladder.thresholds.iter().map(|t| format!("{t:.4}")).collect()),
                    join(ladder.retrials.iter().map(|n| n.to_string()).collect()),
                    join(ladder.step_probabilities.iter().map(|p| format!("{p:.4}")).collect()),
                ])?;
            }
            Err(e) => w.write_record([r.scenario.clone(), r.line.clone(), format!("error: {e}")])?,
        }
    }
    w.flush()?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialLine {
    pub name: String,
    pub temperature_k: f64,
    pub current_a: f64,
    /// (threshold K, steady-state ampacity A, margin K) per queried threshold.
    pub thresholds: Vec<(f64, f64, f64)>,
}

/// Initial operating point: per-line temperature, current, ampacities and margins.
pub fn initial_report(cfg: &ScenarioConfig) -> Result<Vec<InitialLine>, EngineError> {
    let sim = simulator(cfg)?;
    let state = sim.initial_state(stream(cfg.study.seed, 0, 0))?;
    let mut out = Vec::new();
    for (l, br) in sim.scenario().network.branches().iter().enumerate() {
        let t0 = state.temperatures[l];
        let mut rows = Vec::new();
        for k in &cfg.study.thresholds {
            let amp = steady_state_ampacity(k.0, &br.thermal, &state.weather)?;
            rows.push((k.0, amp, k.0 - t0));
        }
        out.push(InitialLine { name: br.name.clone(), temperature_k: t0, current_a: state.currents[l], thresholds: rows });
    }
    Ok(out)
}

pub fn write_initial_report(lines: &[InitialLine], dir: &Path) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("initial.tsv");
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_path(&path)?;
    w.write_record(["line", "temperature_k", "current_a", "threshold_k", "ampacity_a", "margin_k"])?;
    for l in lines {
        for (t, a, m) in &l.thresholds {
            w.write_record([
                l.name.clone(),
                format!("{:.4}", l.temperature_k),
                format!("{:.3}", l.current_a),
                format!("{t}"),
                format!("{a:.3}"),
                format!("{m:.4}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(path)
}
