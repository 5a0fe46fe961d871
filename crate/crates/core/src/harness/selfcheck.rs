//! Runtime invariant checks on a scenario's outputs.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{OutputFormat, ScenarioConfig};
use super::pipeline::run_scenario;
use super::report::{emit_report, ExperimentReport};
use crate::error::Result;
use crate::pareto::{aggregate_px_py, dominance, Dominance, ParetoArchive};
use crate::rocprobs::RateVector;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// Runs the scenario twice and checks normalization, the two-class reduction,
/// front consistency, archive order independence, CSV px/py recomputation
/// and determinism. CSV artifacts are written into `dir`.
pub fn selfcheck(cfg: &ScenarioConfig, dir: &Path) -> Result<Vec<CheckOutcome>> {
    let report = run_scenario(cfg)?;
    let mut out = Vec::new();

    let worst = report
        .detectors
        .iter()
        .map(|d| d.residuals.far_max.max(d.residuals.doubletalk_max))
        .fold(0.0, f64::max);
    out.push(outcome(
        "far and doubletalk rows sum to one",
        worst <= 1e-12,
        format!("max residual {worst:e}"),
    ));

    let failed: Vec<&str> = report
        .detectors
        .iter()
        .filter(|d| !d.reduction_check.passed)
        .map(|d| d.label.as_str())
        .collect();
    out.push(outcome(
        "three-class rates reduce to the two-class ROC",
        failed.is_empty(),
        format!("failing detectors: {failed:?}"),
    ));

    out.push(front_consistency(&report));
    out.push(order_independence(&report, cfg));
    out.push(csv_recompute(&report, dir)?);

    let again = run_scenario(cfg)?;
    out.push(outcome(
        "identical config reproduces the report",
        again == report,
        String::new(),
    ));
    Ok(out)
}

fn front_consistency(report: &ExperimentReport) -> CheckOutcome {
    let mut problems = Vec::new();
    for d in &report.detectors {
        for (i, a) in d.front.iter().enumerate() {
            for (j, b) in d.front.iter().enumerate() {
                if i != j && dominance(&a.rates, &b.rates) != Dominance::None {
                    problems.push(format!("{}: front member {j} is dominated", d.label));
                }
            }
        }
        let uncovered = d
            .evaluated
            .iter()
            .filter(|p| {
                !d.front
                    .iter()
                    .any(|f| dominance(&f.rates, &p.rates) != Dominance::None)
            })
            .count();
        if uncovered > 0 {
            problems.push(format!("{}: {uncovered} evaluated points not covered", d.label));
        }
    }
    outcome(
        "fronts are exactly the non-dominated subsets",
        problems.is_empty(),
        problems.join("; "),
    )
}

fn order_independence(report: &ExperimentReport, cfg: &ScenarioConfig) -> CheckOutcome {
    let key = |a: &ParetoArchive| {
        let mut v: Vec<[u64; 6]> = a
            .points()
            .iter()
            .map(|p| p.rates.0.map(f64::to_bits))
            .collect();
        v.sort_unstable();
        v
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.hash().len() as u64);
    let mut ok = true;
    for d in &report.detectors {
        let forward: ParetoArchive = d.evaluated.iter().cloned().collect();
        let mut shuffled = d.evaluated.clone();
        shuffled.shuffle(&mut rng);
        let shuffled: ParetoArchive = shuffled.into_iter().collect();
        ok &= key(&forward) == key(&shuffled);
    }
    outcome("front is independent of insertion order", ok, String::new())
}

fn csv_recompute(report: &ExperimentReport, dir: &Path) -> Result<CheckOutcome> {
    emit_report(report, dir, OutputFormat::Csv)?;
    let mut rdr = csv::Reader::from_path(dir.join("fronts.csv"))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).expect("known column");
    let idx = ["p_fd", "p_fc", "p_df", "p_dc", "p_cf", "p_cd"].map(col);
    let (ipx, ipy) = (col("px"), col("py"));
    let mut worst = 0.0f64;
    let mut rows = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<f64>().unwrap_or(f64::NAN);
        let (px, py) = aggregate_px_py(&RateVector(idx.map(num)));
        for d in [(px - num(ipx)).abs(), (py - num(ipy)).abs()] {
            // NaN (unparsable cell) sticks and fails the check.
            if d.is_nan() || d > worst {
                worst = d;
            }
        }
        rows += 1;
    }
    Ok(outcome(
        "px/py in fronts.csv match the listed rates",
        worst <= 1e-12,
        format!("{rows} rows, max deviation {worst:e}"),
    ))
}
