use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use linetemp::config::{load_scenario, Mode, ScenarioConfig};
use linetemp::report::{self, Overrides};

#[derive(Parser)]
#[command(version, about = "Line temperature exceedance probabilities by Monte Carlo with RESTART splitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate every (line, threshold) pair of the scenario.
    Run(Common),
    /// Run only the pilot stage and write the threshold ladders.
    Pilot(Common),
    /// Print the initial operating point, ampacities and margins.
    Report(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// crude | restart | steady-state
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    max_trials: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = load_scenario(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        let o = Overrides {
            mode: self.mode,
            epsilon: self.epsilon,
            seed: self.seed,
            threads: self.threads,
            max_trials: self.max_trials,
        };
        o.apply(&mut cfg).context("applying command-line overrides")?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(c) => {
            let cfg = c.load()?;
            let art = report::run(&cfg);
            let (summary, trace) = art.write(&c.out_dir)?;
            println!("{:<28} {:>6} {:>10} {:>12} {:>8} {:>10}  status", "scenario", "line", "T [C]", "gamma", "RE", "N");
            for r in &art.rows {
                println!(
                    "{:<28} {:>6} {:>10.2} {:>12.4e} {:>8.4} {:>10}  {}",
                    r.scenario,
                    r.line,
                    r.threshold_k - 273.15,
                    r.gamma_hat,
                    r.relative_error,
                    r.trials,
                    r.status
                );
            }
            println!("summary: {}\ntrace:   {}", summary.display(), trace.display());
            Ok(art.all_met())
        }
        Command::Pilot(c) => {
            let cfg = c.load()?;
            let rows = report::pilot(&cfg);
            let path = report::write_ladders(&rows, &c.out_dir)?;
            for r in &rows {
                match &r.result {
                    Ok((ladder, g)) => println!(
                        "{} {}: rough {g:.3e}, thresholds [C] {:?}, retrials {:?}",
                        r.scenario,
                        r.line,
                        ladder.thresholds.iter().map(|t| ((t - 273.15) * 100.0).round() / 100.0).collect::<Vec<_>>(),
                        ladder.retrials
                    ),
                    Err(e) => println!("{} {}: {e}", r.scenario, r.line),
                }
            }
            println!("ladders: {}", path.display());
            Ok(rows.iter().all(|r| r.result.is_ok()))
        }
        Command::Report(c) => {
            let cfg = c.load()?;
            let lines = report::initial_report(&cfg)?;
            println!("{:>6} {:>10} {:>10} {:>10} {:>12} {:>10}", "line", "T0 [C]", "I0 [A]", "T [C]", "I_s(T) [A]", "margin K");
            for l in &lines {
                for (t, a, m) in &l.thresholds {
                    println!(
                        "{:>6} {:>10.2} {:>10.1} {:>10.2} {:>12.1} {:>10.2}",
                        l.name,
                        l.temperature_k - 273.15,
                        l.current_a,
                        t - 273.15,
                        a,
                        m
                    );
                }
            }
            let path = report::write_initial_report(&lines, &c.out_dir)?;
            println!("report: {}", path.display());
            Ok(true)
        }
    }
}
