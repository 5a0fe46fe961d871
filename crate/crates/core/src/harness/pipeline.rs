//! Scenario execution: simulation, labeling, threshold sweeps and fronts.

use crate::aecsim::{
    reconvergence_times, run_bnlms, scale_damping, simulate, synthetic_rir, AdaptiveFilterConfig,
    EchoPath, EchoPathSchedule, RirConfig, SimulationTrace,
};
use crate::detectors::{
    decide, epcd_error_corr, epcd_oracle, epsilon_from_statistic, StatisticTrace,
};
use crate::error::{Error, Result};
use crate::pareto::{band_filter, merge_fronts, OperatingPoint, ParetoArchive, Staircase};
use crate::rocprobs::{
    binary_roc_from_counts, reduce_p_false, reduce_p_miss, residuals_from_counts,
    EmptyClassPolicy, GroundTruth, ThreeClassProbs,
};
use crate::signalgen::{
    apply_nfr, build_change_vector, energy_vad, load_signal, synth_speech, ActivityVector, Signal,
    SynthSpeechConfig,
};

use super::config::{
    DetectorSpec, EpcdSpec, FreezeMode, PathSource, ScenarioConfig, SourceConfig,
};
use super::report::{
    BinaryRocPoint, ClassSizes, DetectorReport, ExperimentReport, ReductionCheck, ResidualSummary,
    SeedSummary,
};

/// A simulated scenario, ready for detector evaluation.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub far: Signal,
    /// Near-end speech after the NFR gain.
    pub near: Signal,
    /// Far-end, near-end and echo activity.
    pub x: ActivityVector,
    pub v: ActivityVector,
    pub y: ActivityVector,
    pub schedule: EchoPathSchedule,
    pub filter: AdaptiveFilterConfig,
    pub trace: SimulationTrace,
    pub change_times: Vec<usize>,
    pub reconvergence: Vec<Option<usize>>,
    pub t_hold: usize,
    pub t_hold_estimated: bool,
}

fn load_source(
    src: &SourceConfig,
    cfg: &ScenarioConfig,
    n: usize,
) -> Result<(Signal, ActivityVector)> {
    match src {
        SourceConfig::Synth(s) => {
            let out = synth_speech(&SynthSpeechConfig {
                seed: s.seed,
                duration: n,
                sample_rate: cfg.sample_rate,
                talk_spurt_ms: s.talk_spurt_ms,
                pause_ms: s.pause_ms,
                ar_coeffs: s.ar_coeffs.clone(),
                level: s.level,
                syllable_hz: s.syllable_hz,
            })?;
            Ok((out.signal, out.gate))
        }
        SourceConfig::File(f) => {
            let s = load_signal(&f.path, f.format, cfg.sample_rate)?;
            if s.len() < n {
                return Err(Error::LengthMismatch {
                    what: "input file",
                    expected: n,
                    found: s.len(),
                });
            }
            let mut samples = s.into_samples();
            samples.truncate(n);
            let s = Signal::new(samples, cfg.sample_rate)?;
            let vad = energy_vad(&s, &cfg.vad)?;
            Ok((s, vad))
        }
    }
}

impl PreparedScenario {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let ctx = |stage: &str| format!("scenario '{}', {stage}", cfg.name);
        let n = cfg.n_samples();
        let (far, x) = load_source(&cfg.far, cfg, n).map_err(|e| e.in_segment(ctx("far-end input")))?;
        let (near, v) = load_source(&cfg.near, cfg, n).map_err(|e| e.in_segment(ctx("near-end input")))?;
        let near = apply_nfr(&near, &far, &x, &v, cfg.nfr_db).map_err(|e| e.in_segment(ctx("NFR scaling")))?;

        let ep = &cfg.echo_path;
        let base = match &ep.source {
            PathSource::Synth(p) => synthetic_rir(&RirConfig {
                length: cfg.filter.taps,
                seed: p.seed,
                decay_ms: p.decay_ms,
                drr_db: p.drr_db,
                sample_rate: cfg.sample_rate,
            }),
            PathSource::File { path } => EchoPath::load(path),
        }
        .map_err(|e| e.in_segment(ctx("echo path")))?;
        let change_times: Vec<usize> = ep.change_times_ms.iter().map(|&t| cfg.ms_to_samples(t)).collect();
        let starts = std::iter::once(0).chain(change_times.iter().copied());
        let segments = starts
            .zip(&ep.gains)
            .map(|(s, &g)| Ok((s, scale_damping(&base, g)?)))
            .collect::<Result<Vec<_>>>()?;
        let schedule = EchoPathSchedule::new(segments, 0).map_err(|e| e.in_segment(ctx("echo path")))?;

        let f = &cfg.filter;
        let filter = AdaptiveFilterConfig {
            regularization: f.regularization.unwrap_or(1e-6 * f.taps as f64),
            ..AdaptiveFilterConfig::new(f.taps, f.stepsize, f.block_size)
        };
        let freeze = match f.freeze {
            FreezeMode::FarSingleTalk => x.and(&v.not()).not(),
            FreezeMode::NearTruth => v.clone(),
            FreezeMode::DoubletalkTruth => x.and(&v),
            FreezeMode::None => ActivityVector::zeros(n),
        };
        let trace = simulate(&far, &near, &schedule, cfg.noise, &filter, &freeze)
            .map_err(|e| e.in_segment(ctx("echo cancellation")))?;
        let y = energy_vad(&trace.echo, &cfg.vad)?;

        let reconvergence = if trace.misalignment_db.is_empty() {
            vec![None; change_times.len()]
        } else {
            reconvergence_times(&trace.misalignment_db, f.block_size, &change_times, ep.reconvergence_db)
        };
        let (t_hold, t_hold_estimated) = match ep.t_hold_ms {
            Some(ms) => (cfg.ms_to_samples(ms), false),
            None => {
                // A change that never reconverges holds until the next one.
                let est = change_times
                    .iter()
                    .enumerate()
                    .map(|(k, &t)| {
                        reconvergence[k].unwrap_or_else(|| change_times.get(k + 1).copied().unwrap_or(n) - t)
                    })
                    .max()
                    .unwrap_or(0);
                (est, true)
            }
        };
        let schedule = schedule.with_t_hold(t_hold);

        Ok(Self {
            config: cfg.clone(),
            config_hash: cfg.hash(),
            far,
            near,
            x,
            v,
            y,
            schedule,
            filter,
            trace,
            change_times,
            reconvergence,
            t_hold,
            t_hold_estimated,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.far.len()
    }

    /// Ground-truth labels with change windows of `t_hold` samples.
    pub fn truth(&self, t_hold: usize) -> Result<GroundTruth> {
        let c = build_change_vector(&self.change_times, t_hold, self.n_samples())?;
        GroundTruth::new(self.x.clone(), self.v.clone(), self.y.clone(), c)
    }

    pub fn seeds(&self) -> SeedSummary {
        let cfg = &self.config;
        let seed = |s: &SourceConfig| match s {
            SourceConfig::Synth(s) => Some(s.seed),
            SourceConfig::File(_) => None,
        };
        SeedSummary {
            far: seed(&cfg.far),
            near: seed(&cfg.near),
            noise: cfg.noise.map(|n| n.seed),
            echo_path: match &cfg.echo_path.source {
                PathSource::Synth(p) => Some(p.seed),
                PathSource::File { .. } => None,
            },
        }
    }

    /// First-stage statistic of a detector on this scenario.
    pub fn statistic(&self, spec: &DetectorSpec) -> Result<StatisticTrace> {
        spec.detector_config().statistic(&self.far, &self.trace.microphone)
    }

    fn report_shell(&self) -> ExperimentReport {
        ExperimentReport {
            scenario: self.config.name.clone(),
            config_hash: self.config_hash.clone(),
            seeds: self.seeds(),
            sample_rate: self.config.sample_rate,
            n_samples: self.n_samples(),
            change_times: self.change_times.clone(),
            reconvergence_samples: self.reconvergence.clone(),
            t_hold_samples: self.t_hold,
            t_hold_estimated: self.t_hold_estimated,
            detectors: Vec::new(),
            merged_front: Vec::new(),
            merged_staircase: Staircase::default(),
        }
    }
}

/// Evenly spaced order statistics of the finite values, deduplicated.
pub fn quantile_grid(values: &[f64], points: usize) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() || points == 0 {
        return Vec::new();
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    let mut grid: Vec<f64> = if points == 1 {
        vec![v[m / 2]]
    } else {
        (0..points).map(|i| v[i * (m - 1) / (points - 1)]).collect()
    };
    grid.dedup();
    grid
}

/// How the second-stage decision is produced for a given T1.
enum SecondStage {
    Constant(ActivityVector),
    Fixed(ActivityVector),
    Grid { t2: Vec<f64>, eps: Vec<ActivityVector> },
    ClosedLoop { t2: Vec<f64>, window: usize },
}

fn second_stage(
    prep: &PreparedScenario,
    spec: &DetectorSpec,
    truth: &GroundTruth,
) -> Result<SecondStage> {
    let n = prep.n_samples();
    Ok(match &spec.epcd {
        EpcdSpec::Constant => SecondStage::Constant(ActivityVector::ones(n)),
        EpcdSpec::Oracle => SecondStage::Fixed(epcd_oracle(&truth.c, &truth.v)?),
        EpcdSpec::ErrorCorr(e) => {
            let stat = epcd_error_corr(&prep.far, &prep.trace.error, e.window)?;
            let t2 = match &spec.t2_values {
                Some(t) => t.clone(),
                None => quantile_grid(&stat.values, prep.config.sweep.t2_grid),
            };
            if e.closed_loop {
                SecondStage::ClosedLoop { t2, window: e.window }
            } else {
                let eps = t2
                    .iter()
                    .map(|&t| epsilon_from_statistic(&stat, t))
                    .collect::<Result<Vec<_>>>()?;
                SecondStage::Grid { t2, eps }
            }
        }
    })
}

fn direct_ratio(truth: &GroundTruth, phi: &ActivityVector, doubletalk: bool, detected: bool) -> f64 {
    let (mut num, mut den) = (0u64, 0u64);
    for n in 0..truth.len() {
        if truth.x.get(n) && truth.v.get(n) == doubletalk {
            den += 1;
            if phi.get(n) == detected {
                num += 1;
            }
        }
    }
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Sweeps one detector over its threshold grid against `truth`.
pub fn evaluate_detector(
    prep: &PreparedScenario,
    spec: &DetectorSpec,
    stat: &StatisticTrace,
    truth: &GroundTruth,
    t_hold: usize,
    label: &str,
) -> Result<DetectorReport> {
    let ctx = |e: Error| e.in_segment(format!("scenario '{}', detector '{label}'", prep.config.name));
    let sizes = truth.class_sizes();
    for (den, class) in [
        (sizes.far, crate::ConditionClass::Far),
        (sizes.double, crate::ConditionClass::Doubletalk),
        (sizes.change_denom, crate::ConditionClass::Change),
    ] {
        if den == 0 {
            return Err(ctx(Error::EmptyConditionClass(class)));
        }
    }
    let hangover = spec.detector_config().hangover;
    let t1_grid = match &spec.t1_values {
        Some(t) => t.clone(),
        None => quantile_grid(&stat.values, prep.config.sweep.grid),
    };
    let stage2 = second_stage(prep, spec, truth).map_err(ctx)?;
    let control = truth.with_change(ActivityVector::zeros(truth.len()))?;
    let ones = ActivityVector::ones(truth.len());

    let mut evaluated = Vec::new();
    let mut archive = ParetoArchive::new();
    let mut binary_roc = Vec::new();
    let mut residuals = ResidualSummary {
        far_max: 0.0,
        doubletalk_max: 0.0,
        change_max: 0.0,
        change_row_sum: residuals_from_counts(&sizes).change_row_sum,
    };
    let mut check = ReductionCheck {
        max_p_false_deviation: 0.0,
        max_p_miss_deviation: 0.0,
        passed: true,
    };

    let mut score = |phi: &ActivityVector, eps: &ActivityVector, t1: f64, t2: Option<f64>, discr: bool| -> Result<()> {
        let k = truth.counts(phi, eps)?;
        let r = residuals_from_counts(&k);
        residuals.far_max = residuals.far_max.max(r.far);
        residuals.doubletalk_max = residuals.doubletalk_max.max(r.doubletalk);
        residuals.change_max = residuals.change_max.max(r.change);
        let probs = ThreeClassProbs::from_counts(&k, EmptyClassPolicy::Reject)?;
        let p = OperatingPoint::new(label, t1, t2, probs, discr);
        archive.insert(p.clone());
        evaluated.push(p);
        Ok(())
    };

    for &t1 in &t1_grid {
        let phi = decide(stat, t1, hangover)?;

        let k = truth.counts(&phi, &ones)?;
        let roc = binary_roc_from_counts(&k)?;
        binary_roc.push(BinaryRocPoint {
            t1,
            p_f: roc.p_f,
            p_m: roc.p_m,
            p_f_far_active: if k.x_active == 0 { 0.0 } else { k.x_phi as f64 / k.x_active as f64 },
        });

        let kc = control.counts(&phi, &ones)?;
        let pc = ThreeClassProbs::from_counts(&kc, EmptyClassPolicy::ZeroRow)?;
        let dev_false = (reduce_p_false(&pc) - direct_ratio(&control, &phi, false, true)).abs();
        let dev_miss = (reduce_p_miss(&pc) - direct_ratio(&control, &phi, true, false)).abs();
        check.max_p_false_deviation = check.max_p_false_deviation.max(dev_false);
        check.max_p_miss_deviation = check.max_p_miss_deviation.max(dev_miss);

        match &stage2 {
            SecondStage::Constant(eps) => score(&phi, eps, t1, None, false),
            SecondStage::Fixed(eps) => score(&phi, eps, t1, None, true),
            SecondStage::Grid { t2, eps } => t2
                .iter()
                .zip(eps)
                .try_for_each(|(&t, e)| score(&phi, e, t1, Some(t), true)),
            SecondStage::ClosedLoop { t2, window } => {
                let out = run_bnlms(&prep.far, &prep.trace.microphone, &prep.filter, &phi, None)?;
                let stat2 = epcd_error_corr(&prep.far, &out.error, *window)?;
                t2.iter().try_for_each(|&t| {
                    let e = epsilon_from_statistic(&stat2, t)?;
                    score(&phi, &e, t1, Some(t), true)
                })
            }
        }
        .map_err(ctx)?;
    }
    check.passed = check.max_p_false_deviation <= 1e-12 && check.max_p_miss_deviation <= 1e-12;

    let banded_front = prep
        .config
        .sweep
        .band
        .map(|[lo, hi]| band_filter(&archive, lo, hi).points().to_vec());
    Ok(DetectorReport {
        label: label.to_string(),
        kind: spec.kind,
        t_hold_samples: t_hold,
        class_sizes: ClassSizes {
            far: sizes.far,
            doubletalk: sizes.double,
            change: sizes.change_denom,
        },
        evaluated,
        front: archive.sorted().into_iter().cloned().collect(),
        banded_front,
        staircase: Staircase::from_front(&archive),
        binary_roc,
        residuals,
        reduction_check: check,
    })
}

fn front_archive(points: &[OperatingPoint]) -> ParetoArchive {
    points.iter().cloned().collect()
}

fn attach_merged(report: &mut ExperimentReport) {
    let merged = report
        .detectors
        .iter()
        .fold(ParetoArchive::new(), |acc, d| merge_fronts(&acc, &front_archive(&d.front)));
    report.merged_staircase = Staircase::from_front(&merged);
    report.merged_front = merged.sorted().into_iter().cloned().collect();
}

fn evaluate_all(prep: &PreparedScenario, specs: &[&DetectorSpec]) -> Result<ExperimentReport> {
    let truth = prep.truth(prep.t_hold)?;
    let mut report = prep.report_shell();
    for spec in specs {
        let stat = prep.statistic(spec)?;
        report
            .detectors
            .push(evaluate_detector(prep, spec, &stat, &truth, prep.t_hold, &spec.label)?);
    }
    attach_merged(&mut report);
    Ok(report)
}

/// Runs every configured detector and merges their fronts.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    let prep = PreparedScenario::new(cfg)?;
    evaluate_all(&prep, &cfg.detectors.iter().collect::<Vec<_>>())
}

/// Runs a single detector; `label` picks it, otherwise the first configured one.
pub fn evaluate_single(cfg: &ScenarioConfig, label: Option<&str>) -> Result<ExperimentReport> {
    let spec = match label {
        Some(l) => cfg
            .detectors
            .iter()
            .find(|d| d.label == l)
            .ok_or_else(|| Error::Config(format!("no detector labelled '{l}'")))?,
        None => &cfg.detectors[0],
    };
    let prep = PreparedScenario::new(cfg)?;
    evaluate_all(&prep, &[spec])
}

/// Like [`run_scenario`] but requires at least two detectors.
pub fn compare_detectors(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    if cfg.detectors.len() < 2 {
        return Err(Error::Config("comparison needs at least two detectors".into()));
    }
    run_scenario(cfg)
}

/// Re-labels the same simulation for each hold time. Detector reports are
/// labelled `<label>@<ms>ms`; no merged front is produced.
pub fn thold_sweep(cfg: &ScenarioConfig, values_ms: &[f64]) -> Result<ExperimentReport> {
    if values_ms.is_empty() {
        return Err(Error::Config("hold-time sweep needs at least one value".into()));
    }
    let prep = PreparedScenario::new(cfg)?;
    let stats = cfg
        .detectors
        .iter()
        .map(|d| prep.statistic(d))
        .collect::<Result<Vec<_>>>()?;
    let mut report = prep.report_shell();
    for &ms in values_ms {
        let t_hold = cfg.ms_to_samples(ms);
        let truth = prep.truth(t_hold)?;
        for (spec, stat) in cfg.detectors.iter().zip(&stats) {
            let label = format!("{}@{}ms", spec.label, ms);
            report
                .detectors
                .push(evaluate_detector(&prep, spec, stat, &truth, t_hold, &label)?);
        }
    }
    Ok(report)
}
