//! Input signals and their ground-truth activity labels.
//!
//! Far-end and near-end speech are either loaded from disk (16-bit mono WAV
//! or raw little-endian `f64`) or synthesized as gated, autoregressively
//! coloured noise. Synthetic sources carry their exact on/off gate, so they
//! never need a VAD; loaded audio is labeled with [`energy_vad`].

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A mono, uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate: sample_rate.max(1),
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Returns `gain * self`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Mean power over the whole signal.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

/// Per-sample binary indicator (VAD output, change indicator, detector decision).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ActivityVector {
    bits: Vec<bool>,
}

impl ActivityVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            bits: vec![false; len],
        }
    }

    pub fn ones(len: usize) -> Self {
        Self {
            bits: vec![true; len],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Builds from 0/1 integers; any nonzero value counts as 1.
    pub fn from_u8(bits: &[u8]) -> Self {
        Self {
            bits: bits.iter().map(|&b| b != 0).collect(),
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, n: usize) -> bool {
        self.bits[n]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    pub fn not(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn and(&self, other: &Self) -> Self {
        Self {
            bits: self.iter().zip(other.iter()).map(|(a, b)| a && b).collect(),
        }
    }

    pub fn or(&self, other: &Self) -> Self {
        Self {
            bits: self.iter().zip(other.iter()).map(|(a, b)| a || b).collect(),
        }
    }

    /// Extends every 1 forward by `hangover` samples (clipped at the end).
    pub fn with_hangover(&self, hangover: usize) -> Self {
        if hangover == 0 {
            return self.clone();
        }
        let mut out = vec![false; self.bits.len()];
        let mut remaining = 0usize;
        for (o, &b) in out.iter_mut().zip(&self.bits) {
            if b {
                remaining = hangover + 1;
            }
            if remaining > 0 {
                *o = true;
                remaining -= 1;
            }
        }
        Self { bits: out }
    }
}

impl FromIterator<bool> for ActivityVector {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self {
            bits: iter.into_iter().collect(),
        }
    }
}

/// On-disk sample encodings understood by [`load_signal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalFormat {
    /// 16-bit signed PCM, mono, little-endian RIFF/WAVE.
    Wav16Mono,
    /// Headerless IEEE-754 binary64, little-endian.
    RawF64le,
}

/// Loads a mono signal and checks its sample rate.
///
/// WAV samples are scaled by 1/32768 into [-1, 1). Raw files carry no
/// header, so their rate is taken to be `expected_rate`.
pub fn load_signal(path: &Path, format: SignalFormat, expected_rate: u32) -> Result<Signal> {
    match format {
        SignalFormat::Wav16Mono => {
            let reader = hound::WavReader::open(path)?;
            let spec = reader.spec();
            if spec.channels != 1 {
                return Err(Error::MultiChannel(spec.channels));
            }
            if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
                return Err(Error::Malformed(format!(
                    "{}: expected 16-bit integer PCM, found {}-bit {:?}",
                    path.display(),
                    spec.bits_per_sample,
                    spec.sample_format
                )));
            }
            if spec.sample_rate != expected_rate {
                return Err(Error::SampleRateMismatch {
                    expected: expected_rate,
                    found: spec.sample_rate,
                });
            }
            let samples = reader
                .into_samples::<i16>()
                .map(|s| s.map(|v| f64::from(v) / 32768.0))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Signal::new(samples, spec.sample_rate)
        }
        SignalFormat::RawF64le => {
            let samples = read_raw_f64le(path)?;
            Signal::new(samples, expected_rate)
        }
    }
}

/// Writes `signal` as 16-bit mono PCM, saturating out-of-range samples.
pub fn write_wav16(path: &Path, signal: &Signal) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in signal.samples() {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn read_raw_f64le(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Malformed(format!(
            "{}: length {} is not a multiple of 8 bytes",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn write_raw_f64le(path: &Path, values: &[f64]) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    for v in values {
        file.write_all(&v.to_le_bytes())?;
    }
    file.flush()?;
    Ok(())
}

/// Energy VAD parameters. Defaults: 10 ms frames at 8 kHz, -40 dB, 30 ms hangover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VadConfig {
    pub frame_len: usize,
    /// Frame energy threshold in dB relative to the loudest frame.
    pub energy_threshold_db: f64,
    pub hangover: usize,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame_len: 80,
            energy_threshold_db: -40.0,
            hangover: 240,
        }
    }
}

/// Frame-energy voice activity detector.
///
/// A frame is active when its mean-square energy strictly exceeds the peak
/// frame energy scaled by the dB threshold. Active samples are then extended
/// forward by `hangover` samples. Because the threshold is peak-relative the
/// output does not depend on the overall signal gain.
pub fn energy_vad(s: &Signal, cfg: &VadConfig) -> Result<ActivityVector> {
    if cfg.frame_len == 0 {
        return Err(Error::invalid("VAD frame length must be at least 1"));
    }
    if s.is_empty() {
        return Err(Error::invalid("VAD input signal is empty"));
    }
    let energies: Vec<f64> = s
        .samples()
        .chunks(cfg.frame_len)
        .map(|f| f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64)
        .collect();
    let peak = energies.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(ActivityVector::zeros(s.len()));
    }
    let threshold = peak * 10f64.powf(cfg.energy_threshold_db / 10.0);
    let mut bits = Vec::with_capacity(s.len());
    for (frame, e) in s.samples().chunks(cfg.frame_len).zip(&energies) {
        bits.extend(std::iter::repeat_n(*e > threshold, frame.len()));
    }
    Ok(ActivityVector::from_bits(bits).with_hangover(cfg.hangover))
}

/// Builds the echo-path-change indicator: ones on `[t_k, t_k + t_hold)` for
/// every change time, clipped at `length`. Overlapping windows merge.
pub fn build_change_vector(
    change_times: &[usize],
    t_hold: usize,
    length: usize,
) -> Result<ActivityVector> {
    if change_times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("change times must be strictly increasing"));
    }
    if let Some(&t) = change_times.iter().find(|&&t| t >= length) {
        return Err(Error::invalid(format!(
            "change time {t} outside signal of length {length}"
        )));
    }
    let mut bits = vec![false; length];
    for &t in change_times {
        let end = t.saturating_add(t_hold).min(length);
        bits[t..end].iter_mut().for_each(|b| *b = true);
    }
    Ok(ActivityVector::from_bits(bits))
}

/// Mean power of `s` over the samples where `vad` is active.
pub fn active_power(s: &Signal, vad: &ActivityVector) -> Result<f64> {
    if s.len() != vad.len() {
        return Err(Error::LengthMismatch {
            what: "activity vector",
            expected: s.len(),
            found: vad.len(),
        });
    }
    let (sum, count) = s
        .samples()
        .iter()
        .zip(vad.iter())
        .filter(|(_, a)| *a)
        .fold((0.0, 0usize), |(sum, n), (v, _)| (sum + v * v, n + 1));
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Scales the near-end signal so its active-region power is `nfr_db` relative
/// to the far-end active-region power.
pub fn apply_nfr(
    near: &Signal,
    far: &Signal,
    far_vad: &ActivityVector,
    near_vad: &ActivityVector,
    nfr_db: f64,
) -> Result<Signal> {
    if near.len() != far.len() {
        return Err(Error::LengthMismatch {
            what: "near-end signal",
            expected: far.len(),
            found: near.len(),
        });
    }
    let far_power = active_power(far, far_vad)?;
    let near_power = active_power(near, near_vad)?;
    if far_power == 0.0 {
        return Err(Error::ZeroActiveEnergy("far-end"));
    }
    if near_power == 0.0 {
        return Err(Error::ZeroActiveEnergy("near-end"));
    }
    let gain = (10f64.powf(nfr_db / 10.0) * far_power / near_power).sqrt();
    Ok(near.scaled(gain))
}

/// Parameters of the speech-like signal synthesizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpeechConfig {
    pub seed: u64,
    /// Length in samples.
    pub duration: usize,
    pub sample_rate: u32,
    /// Mean talk-spurt length; each spurt is drawn uniformly in [0.5, 1.5] x mean.
    pub talk_spurt_ms: f64,
    /// Mean pause length. The signal always opens with one pause of exactly this length.
    pub pause_ms: f64,
    /// Coefficients `a_k` of `s(n) = w(n) + sum_k a_k s(n-k)`.
    pub ar_coeffs: Vec<f64>,
    /// RMS level over talk spurts.
    pub level: f64,
    /// Syllabic amplitude-modulation rate; 0 disables modulation.
    pub syllable_hz: f64,
}

impl Default for SynthSpeechConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            duration: 80_000,
            sample_rate: 8000,
            talk_spurt_ms: 1000.0,
            pause_ms: 700.0,
            ar_coeffs: vec![1.3, -0.6],
            level: 0.1,
            syllable_hz: 4.0,
        }
    }
}

impl SynthSpeechConfig {
    /// Fraction of time spent talking in the long run.
    pub fn duty_cycle(&self) -> f64 {
        self.talk_spurt_ms / (self.talk_spurt_ms + self.pause_ms)
    }

    fn validate(&self) -> Result<()> {
        if self.duration == 0 {
            return Err(Error::invalid("synthesis duration must be positive"));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if !(self.talk_spurt_ms >= 0.0 && self.pause_ms >= 0.0)
            || !(self.talk_spurt_ms + self.pause_ms > 0.0)
        {
            return Err(Error::invalid("talk/pause durations must be non-negative"));
        }
        if !(self.level >= 0.0 && self.level.is_finite()) || !(self.syllable_hz >= 0.0) {
            return Err(Error::invalid("level and syllable rate must be non-negative"));
        }
        if !ar_is_stable(&self.ar_coeffs) {
            return Err(Error::UnstableAr);
        }
        Ok(())
    }
}

/// Synthesized signal together with its exact talk-spurt gate.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpeech {
    pub signal: Signal,
    pub gate: ActivityVector,
}

/// Schur-Cohn (step-down) test: true when every pole of
/// `1 / (1 - sum_k a_k z^-k)` lies strictly inside the unit circle.
pub fn ar_is_stable(ar_coeffs: &[f64]) -> bool {
    if ar_coeffs.iter().any(|a| !a.is_finite()) {
        return false;
    }
    // Denominator polynomial 1 + p_1 z^-1 + ... + p_m z^-m.
    let mut poly: Vec<f64> = ar_coeffs.iter().map(|a| -a).collect();
    while let Some(&k) = poly.last() {
        if k.abs() >= 1.0 {
            return false;
        }
        let m = poly.len();
        let denom = 1.0 - k * k;
        let reduced: Vec<f64> = (0..m - 1)
            .map(|i| (poly[i] - k * poly[m - 2 - i]) / denom)
            .collect();
        poly = reduced;
    }
    true
}

/// Speech-like test signal: AR-coloured Gaussian noise, syllabically
/// modulated, gated into alternating talk spurts and pauses.
pub fn synth_speech(cfg: &SynthSpeechConfig) -> Result<SynthSpeech> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ms = f64::from(cfg.sample_rate) / 1000.0;
    let n = cfg.duration;

    let mut gate = vec![false; n];
    let mut spurts = Vec::new();
    if cfg.talk_spurt_ms > 0.0 {
        let mut pos = (cfg.pause_ms * ms).round() as usize;
        while pos < n {
            let talk = ((cfg.talk_spurt_ms * ms * rng.gen_range(0.5..1.5)).round() as usize).max(1);
            let end = (pos + talk).min(n);
            gate[pos..end].iter_mut().for_each(|g| *g = true);
            spurts.push((pos, end));
            let pause = (cfg.pause_ms * ms * rng.gen_range(0.5..1.5)).round() as usize;
            pos = end + pause.max(1);
        }
    }

    let order = cfg.ar_coeffs.len();
    let mut coloured = vec![0.0; n];
    for i in 0..n {
        let w: f64 = rng.sample(StandardNormal);
        let feedback: f64 = cfg
            .ar_coeffs
            .iter()
            .enumerate()
            .take(i.min(order))
            .map(|(k, a)| a * coloured[i - 1 - k])
            .sum();
        coloured[i] = w + feedback;
    }

    let mut samples = vec![0.0; n];
    for &(start, end) in &spurts {
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        for i in start..end {
            let env = if cfg.syllable_hz > 0.0 {
                let t = (i - start) as f64 / f64::from(cfg.sample_rate);
                0.25 + 0.75 * (std::f64::consts::PI * cfg.syllable_hz * t + phase).sin().abs()
            } else {
                1.0
            };
            samples[i] = env * coloured[i];
        }
    }

    let active = gate.iter().filter(|&&g| g).count();
    if active > 0 {
        let rms = (samples.iter().map(|s| s * s).sum::<f64>() / active as f64).sqrt();
        if rms > 0.0 {
            let g = cfg.level / rms;
            samples.iter_mut().for_each(|s| *s *= g);
        }
    }

    Ok(SynthSpeech {
        signal: Signal::new(samples, cfg.sample_rate)?,
        gate: ActivityVector::from_bits(gate),
    })
}
