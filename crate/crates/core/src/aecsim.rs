//! Echo rendering through a switched echo path and the block-NLMS canceller.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signalgen::{read_raw_f64le, write_raw_f64le, ActivityVector, Signal};

/// Value reported by [`misalignment_db`] when the estimate is exact.
pub const MISALIGNMENT_FLOOR_DB: f64 = -300.0;

/// Loudspeaker-to-microphone impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoPath {
    taps: Vec<f64>,
}

impl EchoPath {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::invalid("echo path needs at least one tap"));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("echo path taps must be finite"));
        }
        Ok(Self { taps })
    }

    /// Unit impulse of length `len`.
    pub fn identity(len: usize) -> Self {
        let mut taps = vec![0.0; len.max(1)];
        taps[0] = 1.0;
        Self { taps }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum::<f64>().sqrt()
    }

    /// Reads a raw little-endian `f64` tap file.
    pub fn load(path: &Path) -> Result<Self> {
        Self::new(read_raw_f64le(path)?)
    }

    pub fn store(&self, path: &Path) -> Result<()> {
        write_raw_f64le(path, &self.taps)
    }
}

/// Multiplies every tap by `factor`.
pub fn scale_damping(h: &EchoPath, factor: f64) -> Result<EchoPath> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::invalid(format!("damping factor must be positive, got {factor}")));
    }
    EchoPath::new(h.taps.iter().map(|t| t * factor).collect())
}

/// Seeded synthetic room response: a unit direct-path tap at lag 0 followed by
/// an exponentially decaying Gaussian tail, normalized to unit energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RirConfig {
    pub length: usize,
    pub seed: u64,
    /// Amplitude decay time constant of the tail.
    pub decay_ms: f64,
    /// Direct-to-reverberant energy ratio.
    pub drr_db: f64,
    pub sample_rate: u32,
}

impl Default for RirConfig {
    fn default() -> Self {
        Self {
            length: 1024,
            seed: 0,
            decay_ms: 30.0,
            drr_db: 6.0,
            sample_rate: 8000,
        }
    }
}

pub fn synthetic_rir(cfg: &RirConfig) -> Result<EchoPath> {
    if cfg.length == 0 || !(cfg.decay_ms > 0.0) || cfg.sample_rate == 0 {
        return Err(Error::invalid("RIR needs positive length, decay and sample rate"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tau = cfg.decay_ms * f64::from(cfg.sample_rate) / 1000.0;
    let mut taps = vec![0.0; cfg.length];
    taps[0] = 1.0;
    for (i, t) in taps.iter_mut().enumerate().skip(1) {
        let w: f64 = StandardNormal.sample(&mut rng);
        *t = (-(i as f64) / tau).exp() * w;
    }
    let tail: f64 = taps[1..].iter().map(|t| t * t).sum();
    if tail > 0.0 {
        let g = (10f64.powf(-cfg.drr_db / 10.0) / tail).sqrt();
        taps[1..].iter_mut().for_each(|t| *t *= g);
    }
    let norm = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|t| *t /= norm);
    EchoPath::new(taps)
}

/// Piecewise-constant echo path with instantaneous switches.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoPathSchedule {
    segments: Vec<(usize, EchoPath)>,
    t_hold: usize,
}

impl EchoPathSchedule {
    pub fn new(segments: Vec<(usize, EchoPath)>, t_hold: usize) -> Result<Self> {
        let Some((first, path0)) = segments.first() else {
            return Err(Error::invalid("schedule needs at least one segment"));
        };
        if *first != 0 {
            return Err(Error::invalid("first schedule segment must start at sample 0"));
        }
        if segments.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::invalid("segment start samples must be strictly increasing"));
        }
        if segments.iter().any(|(_, p)| p.len() != path0.len()) {
            return Err(Error::invalid("all schedule paths must have the same length"));
        }
        Ok(Self { segments, t_hold })
    }

    pub fn single(path: EchoPath) -> Self {
        Self {
            segments: vec![(0, path)],
            t_hold: 0,
        }
    }

    pub fn segments(&self) -> &[(usize, EchoPath)] {
        &self.segments
    }

    pub fn t_hold(&self) -> usize {
        self.t_hold
    }

    pub fn with_t_hold(mut self, t_hold: usize) -> Self {
        self.t_hold = t_hold;
        self
    }

    pub fn path_len(&self) -> usize {
        self.segments[0].1.len()
    }

    /// Sample indices where the path switches (segment starts after the first).
    pub fn change_times(&self) -> Vec<usize> {
        self.segments.iter().skip(1).map(|(s, _)| *s).collect()
    }

    /// Path active at sample `n`.
    pub fn path_at(&self, n: usize) -> &EchoPath {
        let idx = self.segments.partition_point(|(s, _)| *s <= n) - 1;
        &self.segments[idx].1
    }
}

/// Convolves the far-end signal with the path active at each output sample.
pub fn render_echo(far: &Signal, schedule: &EchoPathSchedule) -> Result<Signal> {
    if far.is_empty() {
        return Err(Error::invalid("far-end signal is empty"));
    }
    let n = far.len();
    let l = schedule.path_len();
    let padded = padded_input(far.samples(), l);
    let mut out = vec![0.0; n];
    let segs = schedule.segments();
    for (k, (start, path)) in segs.iter().enumerate() {
        let end = segs.get(k + 1).map_or(n, |(s, _)| *s).min(n);
        let reversed: Vec<f64> = path.taps().iter().rev().copied().collect();
        for (i, o) in out.iter_mut().enumerate().take(end).skip(*start) {
            *o = dot(&reversed, &padded[i..i + l]);
        }
    }
    Signal::new(out, far.sample_rate())
}

/// Additive white Gaussian microphone noise, level relative to echo power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub level_db: f64,
    pub seed: u64,
}

/// `d = y + v (+ noise)`.
pub fn mix_microphone(echo: &Signal, near: &Signal, noise: Option<NoiseConfig>) -> Result<Signal> {
    if echo.len() != near.len() {
        return Err(Error::LengthMismatch {
            what: "near-end signal",
            expected: echo.len(),
            found: near.len(),
        });
    }
    let mut d: Vec<f64> = echo
        .samples()
        .iter()
        .zip(near.samples())
        .map(|(y, v)| y + v)
        .collect();
    if let Some(noise) = noise {
        let sigma = (echo.power() * 10f64.powf(noise.level_db / 10.0)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        for s in d.iter_mut() {
            let w: f64 = StandardNormal.sample(&mut rng);
            *s += sigma * w;
        }
    }
    Signal::new(d, echo.sample_rate())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveFilterConfig {
    pub taps: usize,
    pub stepsize: f64,
    pub block_size: usize,
    pub regularization: f64,
}

impl AdaptiveFilterConfig {
    /// Regularization defaults to `1e-6 * taps`.
    pub fn new(taps: usize, stepsize: f64, block_size: usize) -> Self {
        Self {
            taps,
            stepsize,
            block_size,
            regularization: 1e-6 * taps as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 {
            return Err(Error::invalid("adaptive filter needs at least one tap"));
        }
        if !(self.stepsize >= 0.0 && self.stepsize <= 2.0) {
            return Err(Error::invalid(format!("step size {} outside [0, 2]", self.stepsize)));
        }
        if self.block_size == 0 {
            return Err(Error::invalid("block size must be at least 1"));
        }
        if !(self.regularization > 0.0) {
            return Err(Error::invalid("regularization must be positive"));
        }
        Ok(())
    }
}

/// 1024 taps, step 0.5, blocks of 4 samples. Longer blocks diverge on
/// strongly coloured, bursty input at this step size.
impl Default for AdaptiveFilterConfig {
    fn default() -> Self {
        Self::new(1024, 0.5, 4)
    }
}

/// Output of [`run_bnlms`].
#[derive(Debug, Clone, PartialEq)]
pub struct BnlmsOutput {
    pub error: Signal,
    pub estimate_coeffs_final: Vec<f64>,
    /// Per-block misalignment in dB; empty when no ground truth was supplied.
    pub misalignment_db: Vec<f64>,
}

/// Block NLMS echo canceller.
///
/// Within a block the estimate is held fixed; at the block end it moves by
/// `mu * sum_n e(n) x_n / (mean_n |x_n|^2 + delta)`, where `x_n` is the
/// length-L regressor at sample `n`. The normalization is the average
/// regressor energy over the block, so for block sizes well below L the
/// recursion tracks sample-wise NLMS with the same step size. Blocks that
/// contain any set `freeze` bit are filtered but not adapted.
pub fn run_bnlms(
    far: &Signal,
    mic: &Signal,
    cfg: &AdaptiveFilterConfig,
    freeze: &ActivityVector,
    truth: Option<&EchoPathSchedule>,
) -> Result<BnlmsOutput> {
    cfg.validate()?;
    let n = far.len();
    if mic.len() != n {
        return Err(Error::LengthMismatch {
            what: "microphone signal",
            expected: n,
            found: mic.len(),
        });
    }
    if freeze.len() != n {
        return Err(Error::LengthMismatch {
            what: "freeze vector",
            expected: n,
            found: freeze.len(),
        });
    }
    if let Some(t) = truth {
        if t.path_len() != cfg.taps {
            return Err(Error::invalid(format!(
                "true path has {} taps, filter has {}",
                t.path_len(),
                cfg.taps
            )));
        }
    }

    let l = cfg.taps;
    let xp = padded_input(far.samples(), l);
    let d = mic.samples();
    // Reversed estimate: est_rev[j] multiplies xp[n + j].
    let mut est_rev = vec![0.0; l];
    let mut error = vec![0.0; n];
    let mut misalignment = Vec::with_capacity(if truth.is_some() { n.div_ceil(cfg.block_size) } else { 0 });
    let mut grad = vec![0.0; l];
    let freeze_bits = freeze.bits();

    let mut start = 0;
    while start < n {
        let end = (start + cfg.block_size).min(n);
        let frozen = freeze_bits[start..end].iter().any(|&b| b);
        let mut energy: f64 = xp[start..start + l].iter().map(|v| v * v).sum();
        let mut energy_sum = 0.0;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in start..end {
            if i > start {
                let enter = xp[i + l - 1];
                let leave = xp[i - 1];
                energy = (energy + enter * enter - leave * leave).max(0.0);
            }
            energy_sum += energy;
            let window = &xp[i..i + l];
            let e = d[i] - dot(&est_rev, window);
            error[i] = e;
            if !frozen && e != 0.0 {
                grad.iter_mut().zip(window).for_each(|(g, x)| *g += e * x);
            }
        }
        if !frozen && cfg.stepsize > 0.0 {
            let mean_energy = energy_sum / (end - start) as f64;
            let gain = cfg.stepsize / (mean_energy + cfg.regularization);
            est_rev.iter_mut().zip(&grad).for_each(|(h, g)| *h += gain * g);
        }
        if let Some(t) = truth {
            let h = t.path_at(end - 1);
            let dist: f64 = h
                .taps()
                .iter()
                .zip(est_rev.iter().rev())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            misalignment.push(ratio_db(dist, h.norm()));
        }
        start = end;
    }

    Ok(BnlmsOutput {
        error: Signal::new(error, far.sample_rate())?,
        estimate_coeffs_final: est_rev.into_iter().rev().collect(),
        misalignment_db: misalignment,
    })
}

/// `20 log10(|truth - estimate| / |truth|)`, floored at [`MISALIGNMENT_FLOOR_DB`].
pub fn misalignment_db(estimate: &[f64], truth: &EchoPath) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "estimate taps",
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    let norm = truth.norm();
    if norm == 0.0 {
        return Err(Error::invalid("true echo path has zero norm"));
    }
    let dist = truth
        .taps()
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(ratio_db(dist, norm))
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        return 0.0;
    }
    (20.0 * (num / den).log10()).max(MISALIGNMENT_FLOOR_DB)
}

/// For each change time, samples from the change until the end of the first
/// block whose misalignment is at or below `threshold_db`. `None` when the
/// filter does not get there before the next change (or the end).
pub fn reconvergence_times(
    misalignment_db: &[f64],
    block_size: usize,
    change_times: &[usize],
    threshold_db: f64,
) -> Vec<Option<usize>> {
    change_times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let limit = change_times.get(k + 1).copied().unwrap_or(usize::MAX);
            let first_block = t / block_size;
            misalignment_db
                .iter()
                .enumerate()
                .skip(first_block)
                .take_while(|(b, _)| b * block_size < limit)
                .find(|(_, m)| **m <= threshold_db)
                .map(|(b, _)| (b + 1) * block_size - t)
        })
        .collect()
}

/// Everything produced by one echo-cancellation simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub echo: Signal,
    pub microphone: Signal,
    pub error: Signal,
    pub estimate_coeffs_final: Vec<f64>,
    pub misalignment_db: Vec<f64>,
}

/// Renders the echo, mixes the microphone and runs the canceller against the schedule.
pub fn simulate(
    far: &Signal,
    near: &Signal,
    schedule: &EchoPathSchedule,
    noise: Option<NoiseConfig>,
    cfg: &AdaptiveFilterConfig,
    freeze: &ActivityVector,
) -> Result<SimulationTrace> {
    let echo = render_echo(far, schedule)?;
    let microphone = mix_microphone(&echo, near, noise)?;
    let truth = (schedule.path_len() == cfg.taps).then_some(schedule);
    let out = run_bnlms(far, &microphone, cfg, freeze, truth)?;
    Ok(SimulationTrace {
        echo,
        microphone,
        error: out.error,
        estimate_coeffs_final: out.estimate_coeffs_final,
        misalignment_db: out.misalignment_db,
    })
}

fn padded_input(x: &[f64], taps: usize) -> Vec<f64> {
    let mut p = vec![0.0; taps - 1 + x.len()];
    p[taps - 1..].copy_from_slice(x);
    p
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for k in 0..4 {
            acc[k] += ca[k] * cb[k];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}
