use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dtdroc::harness::{
    compare_detectors, emit_report, evaluate_single, selfcheck, thold_sweep,
    ExperimentReport, OutputFormat, PreparedScenario, ScenarioConfig,
};
use dtdroc::signalgen::write_raw_f64le;
use dtdroc::{Error, Result};

#[derive(Parser)]
#[command(name = "dtdroc", version, about = "Three-class ROC evaluation of doubletalk detectors")]
struct Cli {
    /// Scenario TOML; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Base seed: far N, near N+1, noise N+2, echo path N+3.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Points in each T1 threshold grid.
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scenario and dump signals, labels, misalignment and statistics.
    Simulate,
    /// Evaluate one detector.
    Evaluate {
        #[arg(long)]
        detector: Option<String>,
    },
    /// Evaluate all detectors and merge their fronts.
    Compare,
    /// Sweep the change-window length.
    TholdSweep {
        /// Hold times in ms, comma separated; defaults to the config's list.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Check runtime invariants on the scenario.
    Selfcheck,
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.override_seed(s);
    }
    if let Some(g) = cli.grid {
        cfg.sweep.grid = g;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_report(report: &ExperimentReport, cfg: &ScenarioConfig) -> Result<()> {
    for path in emit_report(report, &cfg.output.dir, cfg.output.format)? {
        println!("wrote {}", path.display());
    }
    for d in &report.detectors {
        println!(
            "{}: {} evaluated, {} on front, reduction {}",
            d.label,
            d.evaluated.len(),
            d.front.len(),
            if d.reduction_check.passed { "ok" } else { "FAILED" }
        );
    }
    Ok(())
}

fn dump_simulation(cfg: &ScenarioConfig) -> Result<()> {
    let prep = PreparedScenario::new(cfg)?;
    let dir: &Path = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    for (name, s) in [
        ("far.f64", &prep.far),
        ("near.f64", &prep.near),
        ("echo.f64", &prep.trace.echo),
        ("mic.f64", &prep.trace.microphone),
        ("error.f64", &prep.trace.error),
    ] {
        write_raw_f64le(&dir.join(name), s.samples())?;
    }
    let truth = prep.truth(prep.t_hold)?;
    let mut w = csv::Writer::from_path(dir.join("labels.csv"))?;
    w.write_record(["sample_index", "x", "v", "y", "c"])?;
    for n in 0..truth.len() {
        let b = |a: &dtdroc::signalgen::ActivityVector| u8::from(a.get(n)).to_string();
        w.write_record([n.to_string(), b(&truth.x), b(&truth.v), b(&truth.y), b(&truth.c)])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("misalignment.csv"))?;
    w.write_record(["block", "misalignment_db"])?;
    for (b, m) in prep.trace.misalignment_db.iter().enumerate() {
        w.write_record([b.to_string(), m.to_string()])?;
    }
    w.flush()?;
    for spec in &cfg.detectors {
        prep.statistic(spec)?
            .write_csv(&dir.join(format!("statistic_{}.csv", spec.label)))?;
    }
    println!("config hash {}", prep.config_hash);
    println!("t_hold {} samples{}", prep.t_hold, if prep.t_hold_estimated { " (estimated)" } else { "" });
    for (t, r) in prep.change_times.iter().zip(&prep.reconvergence) {
        match r {
            Some(r) => println!("change at {t}: reconverged after {r} samples"),
            None => println!("change at {t}: did not reconverge"),
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Simulate => dump_simulation(&cfg)?,
        Command::Evaluate { detector } => write_report(&evaluate_single(&cfg, detector.as_deref())?, &cfg)?,
        Command::Compare => write_report(&compare_detectors(&cfg)?, &cfg)?,
        Command::TholdSweep { values } => {
            let values = values.clone().unwrap_or_else(|| cfg.sweep.t_hold_ms.clone());
            write_report(&thold_sweep(&cfg, &values)?, &cfg)?;
        }
        Command::Selfcheck => {
            let outcomes = selfcheck(&cfg, &cfg.output.dir)?;
            let mut all = true;
            for o in &outcomes {
                all &= o.passed;
                let tag = if o.passed { "ok  " } else { "FAIL" };
                if o.detail.is_empty() {
                    println!("{tag} {}", o.name);
                } else {
                    println!("{tag} {} ({})", o.name, o.detail);
                }
            }
            return Ok(all);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.root() {
                Error::Config(_) => 2,
                Error::EmptyConditionClass(_) => 3,
                _ => 1,
            })
        }
    }
}

