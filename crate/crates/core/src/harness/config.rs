//! Scenario configuration (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aecsim::{AdaptiveFilterConfig, NoiseConfig};
use crate::detectors::{DetectorConfig, DetectorKind};
use crate::error::{Error, Result};
use crate::signalgen::{SignalFormat, VadConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    #[serde(default = "default_duration")]
    pub duration_ms: f64,
    /// Near-end to far-end active-power ratio.
    #[serde(default)]
    pub nfr_db: f64,
    #[serde(default = "default_far")]
    pub far: SourceConfig,
    #[serde(default = "default_near")]
    pub near: SourceConfig,
    #[serde(default)]
    pub vad: VadConfig,
    /// Microphone noise; absent means noiseless.
    #[serde(default = "default_noise")]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub echo_path: EchoPathConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<DetectorSpec>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "default".into()
}
fn default_rate() -> u32 {
    8000
}
fn default_duration() -> f64 {
    40_000.0
}
fn default_far() -> SourceConfig {
    SourceConfig::Synth(SynthSource {
        seed: 1,
        ..SynthSource::default()
    })
}
fn default_near() -> SourceConfig {
    SourceConfig::Synth(SynthSource {
        seed: 2,
        talk_spurt_ms: 900.0,
        pause_ms: 1800.0,
        ar_coeffs: vec![1.1, -0.5],
        ..SynthSource::default()
    })
}
fn default_noise() -> Option<NoiseConfig> {
    Some(NoiseConfig {
        level_db: -30.0,
        seed: 3,
    })
}
fn default_detectors() -> Vec<DetectorSpec> {
    vec![
        DetectorSpec::new("geigel", DetectorKind::Geigel),
        DetectorSpec::new("xcorr", DetectorKind::Xcorr),
    ]
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

/// Where a speech signal comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceConfig {
    Synth(SynthSource),
    File(FileSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSource {
    pub seed: u64,
    pub talk_spurt_ms: f64,
    pub pause_ms: f64,
    pub ar_coeffs: Vec<f64>,
    pub level: f64,
    pub syllable_hz: f64,
}

impl Default for SynthSource {
    fn default() -> Self {
        let d = crate::signalgen::SynthSpeechConfig::default();
        Self {
            seed: d.seed,
            talk_spurt_ms: d.talk_spurt_ms,
            pause_ms: d.pause_ms,
            ar_coeffs: d.ar_coeffs,
            level: d.level,
            syllable_hz: d.syllable_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    pub path: PathBuf,
    pub format: SignalFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathSource {
    Synth(SynthPath),
    /// Raw little-endian f64 tap file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthPath {
    pub seed: u64,
    pub decay_ms: f64,
    pub drr_db: f64,
}

impl Default for SynthPath {
    fn default() -> Self {
        Self {
            seed: 4,
            decay_ms: 30.0,
            drr_db: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EchoPathConfig {
    pub source: PathSource,
    /// Instants of the instantaneous path switches.
    pub change_times_ms: Vec<f64>,
    /// Gain of the base path in each segment (one more entry than change times).
    pub gains: Vec<f64>,
    /// Change-window length; when absent it is estimated from the misalignment trace.
    pub t_hold_ms: Option<f64>,
    /// Misalignment level that counts as reconverged when estimating the hold time.
    pub reconvergence_db: f64,
}

impl Default for EchoPathConfig {
    fn default() -> Self {
        Self {
            source: PathSource::Synth(SynthPath::default()),
            change_times_ms: vec![13_000.0, 26_000.0],
            gains: vec![0.1, 1.0, 0.1],
            t_hold_ms: Some(1000.0),
            reconvergence_db: -10.0,
        }
    }
}

/// What blocks adaptation in the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreezeMode {
    /// Adapt only during true far-end single talk (`x.!v`).
    FarSingleTalk,
    /// Freeze whenever the near end is active (`v`).
    NearTruth,
    /// Freeze during true doubletalk (`x.v`).
    DoubletalkTruth,
    /// Never freeze.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub taps: usize,
    pub stepsize: f64,
    pub block_size: usize,
    /// Defaults to `1e-6 * taps`.
    pub regularization: Option<f64>,
    pub freeze: FreezeMode,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let d = AdaptiveFilterConfig::default();
        Self {
            taps: d.taps,
            stepsize: d.stepsize,
            block_size: d.block_size,
            regularization: None,
            freeze: FreezeMode::FarSingleTalk,
        }
    }
}

/// Second-stage (echo-path-change) discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpcdSpec {
    Constant,
    Oracle,
    ErrorCorr(ErrorCorrSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorCorrSpec {
    #[serde(default = "default_error_window")]
    pub window: usize,
    /// Re-simulate per T1 with adaptation frozen by the detector itself.
    #[serde(default)]
    pub closed_loop: bool,
}

fn default_error_window() -> usize {
    2048
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub label: String,
    pub kind: DetectorKind,
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub hangover: Option<usize>,
    #[serde(default = "default_epcd")]
    pub epcd: EpcdSpec,
    /// Explicit T1 values; otherwise a quantile grid over the statistic.
    #[serde(default)]
    pub t1_values: Option<Vec<f64>>,
    #[serde(default)]
    pub t2_values: Option<Vec<f64>>,
}

fn default_epcd() -> EpcdSpec {
    EpcdSpec::Constant
}

impl DetectorSpec {
    pub fn new(label: &str, kind: DetectorKind) -> Self {
        Self {
            label: label.into(),
            kind,
            window: None,
            hangover: None,
            epcd: EpcdSpec::Constant,
            t1_values: None,
            t2_values: None,
        }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        let base = match self.kind {
            DetectorKind::Geigel => DetectorConfig::geigel(),
            DetectorKind::Xcorr => DetectorConfig::xcorr(),
        };
        DetectorConfig {
            window: self.window.unwrap_or(base.window),
            hangover: self.hangover.unwrap_or(base.hangover),
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Points in each quantile-spaced T1 grid.
    pub grid: usize,
    pub t2_grid: usize,
    /// Optional band on `p_fd`, `p_fc`, `p_cf` applied to reported fronts.
    pub band: Option<[f64; 2]>,
    /// Hold times for the T_hold sweep.
    pub t_hold_ms: Vec<f64>,
    /// Px interval over which staircases are compared.
    pub match_px: [f64; 2],
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: 256,
            t2_grid: 16,
            band: None,
            t_hold_ms: vec![352.0, 672.0, 992.0, 1300.0, 1600.0],
            match_px: [0.15, 0.25],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            format: OutputFormat::Csv,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative signal and path files resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for src in [&mut self.far, &mut self.near] {
            if let SourceConfig::File(f) = src {
                fix(&mut f.path);
            }
        }
        if let PathSource::File { path } = &mut self.echo_path.source {
            fix(path);
        }
    }

    /// Replaces every seed with one derived from `seed`:
    /// far `seed`, near `seed + 1`, noise `seed + 2`, echo path `seed + 3`.
    pub fn override_seed(&mut self, seed: u64) {
        if let SourceConfig::Synth(s) = &mut self.far {
            s.seed = seed;
        }
        if let SourceConfig::Synth(s) = &mut self.near {
            s.seed = seed.wrapping_add(1);
        }
        if let Some(n) = &mut self.noise {
            n.seed = seed.wrapping_add(2);
        }
        if let PathSource::Synth(p) = &mut self.echo_path.source {
            p.seed = seed.wrapping_add(3);
        }
    }

    pub fn n_samples(&self) -> usize {
        self.ms_to_samples(self.duration_ms)
    }

    pub fn ms_to_samples(&self, ms: f64) -> usize {
        (ms * f64::from(self.sample_rate) / 1000.0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if !(self.duration_ms > 0.0) || self.n_samples() == 0 {
            return bad("duration_ms must be positive".into());
        }
        if !self.nfr_db.is_finite() {
            return bad("nfr_db must be finite".into());
        }
        for (name, src) in [("far", &self.far), ("near", &self.near)] {
            match src {
                SourceConfig::File(f) if !f.path.exists() => {
                    return bad(format!("{name} source {} does not exist", f.path.display()));
                }
                SourceConfig::Synth(s) if !crate::signalgen::ar_is_stable(&s.ar_coeffs) => {
                    return bad(format!("{name} source has unstable AR coefficients"));
                }
                _ => {}
            }
        }
        if self.vad.frame_len == 0 {
            return bad("vad.frame_len must be at least 1".into());
        }
        let ep = &self.echo_path;
        if let PathSource::File { path } = &ep.source {
            if !path.exists() {
                return bad(format!("echo path file {} does not exist", path.display()));
            }
        }
        if ep.gains.len() != ep.change_times_ms.len() + 1 {
            return bad(format!(
                "echo_path.gains needs {} entries (one per segment), found {}",
                ep.change_times_ms.len() + 1,
                ep.gains.len()
            ));
        }
        if ep.gains.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return bad("echo_path.gains must be positive".into());
        }
        let times: Vec<usize> = ep.change_times_ms.iter().map(|&t| self.ms_to_samples(t)).collect();
        if ep.change_times_ms.iter().any(|t| !(*t > 0.0))
            || times.windows(2).any(|w| w[0] >= w[1])
            || times.last().is_some_and(|&t| t >= self.n_samples())
        {
            return bad("echo_path.change_times_ms must be increasing and inside the signal".into());
        }
        if ep.t_hold_ms.is_some_and(|t| !(t >= 0.0)) {
            return bad("echo_path.t_hold_ms must be non-negative".into());
        }
        let f = &self.filter;
        if f.taps == 0 || f.block_size == 0 || !(f.stepsize >= 0.0 && f.stepsize <= 2.0) {
            return bad("filter needs taps >= 1, block_size >= 1 and 0 <= stepsize <= 2".into());
        }
        if f.regularization.is_some_and(|d| !(d > 0.0)) {
            return bad("filter.regularization must be positive".into());
        }
        if self.detectors.is_empty() {
            return bad("at least one detector is required".into());
        }
        let mut labels: Vec<&str> = self.detectors.iter().map(|d| d.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return bad("detector labels must be unique".into());
        }
        for d in &self.detectors {
            let dc = d.detector_config();
            let min_window = if d.kind == DetectorKind::Xcorr { 2 } else { 1 };
            if dc.window < min_window {
                return bad(format!("detector {}: window too small", d.label));
            }
            for grid in [&d.t1_values, &d.t2_values].into_iter().flatten() {
                if grid.is_empty() || grid.iter().any(|t| !t.is_finite()) {
                    return bad(format!("detector {}: threshold lists must be nonempty and finite", d.label));
                }
            }
            if let EpcdSpec::ErrorCorr(e) = &d.epcd {
                if e.window < 2 {
                    return bad(format!("detector {}: error-corr window must be at least 2", d.label));
                }
            }
        }
        if self.sweep.grid == 0 || self.sweep.t2_grid == 0 {
            return bad("sweep grids must have at least one point".into());
        }
        if let Some([lo, hi]) = self.sweep.band {
            if !(lo <= hi) {
                return bad("sweep.band must satisfy low <= high".into());
            }
        }
        if self.sweep.t_hold_ms.iter().any(|t| !(*t >= 0.0)) {
            return bad("sweep.t_hold_ms values must be non-negative".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the (resolved) config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
