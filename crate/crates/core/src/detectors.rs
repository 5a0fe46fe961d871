//! Two-stage doubletalk detection.
//!
//! The first stage forms a statistic from far-end and microphone signals and
//! thresholds it at T1 into the doubletalk-or-change decision `phi`. The second
//! stage decides, where `phi = 1`, between doubletalk (`epsilon = 1`) and echo
//! path change (`epsilon = 0`).

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signalgen::{ActivityVector, Signal};

/// Which side of the threshold raises a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    DeclareWhenAbove,
    DeclareWhenBelow,
}

/// One statistic value per input sample. Geigel may emit `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticTrace {
    pub values: Vec<f64>,
    pub orientation: Orientation,
}

impl StatisticTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes `sample_index,value` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "sample_index,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i},{v}")?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Geigel,
    Xcorr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub window: usize,
    pub hangover: usize,
}

impl DetectorConfig {
    /// Geigel over a 1024-sample far-end window, 30 ms hangover at 8 kHz.
    pub fn geigel() -> Self {
        Self {
            kind: DetectorKind::Geigel,
            window: 1024,
            hangover: 240,
        }
    }

    pub fn xcorr() -> Self {
        Self {
            kind: DetectorKind::Xcorr,
            window: 256,
            hangover: 240,
        }
    }

    pub fn statistic(&self, far: &Signal, mic: &Signal) -> Result<StatisticTrace> {
        match self.kind {
            DetectorKind::Geigel => geigel_statistic(far, mic, self.window),
            DetectorKind::Xcorr => xcorr_statistic(far, mic, self.window),
        }
    }
}

fn check_lengths(a: &Signal, b: &Signal, what: &'static str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            what,
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Geigel statistic `|d(n)| / max_{0 <= i < window} |x(n - i)|`.
///
/// A silent far-end window yields `+inf` when `d(n) != 0` and 0 otherwise.
pub fn geigel_statistic(far: &Signal, mic: &Signal, window: usize) -> Result<StatisticTrace> {
    check_lengths(far, mic, "microphone signal")?;
    if window == 0 {
        return Err(Error::invalid("Geigel window must be at least 1"));
    }
    let x = far.samples();
    let d = mic.samples();
    let mut values = Vec::with_capacity(x.len());
    // Indices of a decreasing run of |x| over the trailing window.
    let mut maxq: VecDeque<usize> = VecDeque::new();
    for n in 0..x.len() {
        let ax = x[n].abs();
        while maxq.back().is_some_and(|&j| x[j].abs() <= ax) {
            maxq.pop_back();
        }
        maxq.push_back(n);
        while maxq.front().is_some_and(|&j| j + window <= n) {
            maxq.pop_front();
        }
        let peak = x[*maxq.front().expect("window holds sample n")].abs();
        let ad = d[n].abs();
        values.push(if peak > 0.0 {
            ad / peak
        } else if ad > 0.0 {
            f64::INFINITY
        } else {
            0.0
        });
    }
    Ok(StatisticTrace {
        values,
        orientation: Orientation::DeclareWhenAbove,
    })
}

/// Trailing-window normalized cross-correlation magnitude at lag 0.
///
/// Sums are carried incrementally and recomputed from scratch once per
/// window length so rounding cannot accumulate. Exact zero energy is detected
/// by counting nonzero samples in the window, in which case `empty` is returned.
fn windowed_ncc(a: &[f64], b: &[f64], window: usize, empty: f64) -> Vec<f64> {
    let n = a.len();
    let mut out = Vec::with_capacity(n);
    let (mut sab, mut saa, mut sbb) = (0.0f64, 0.0f64, 0.0f64);
    let (mut nz_a, mut nz_b) = (0usize, 0usize);
    for i in 0..n {
        let lo = (i + 1).saturating_sub(window);
        if i % window == 0 {
            sab = 0.0;
            saa = 0.0;
            sbb = 0.0;
            nz_a = 0;
            nz_b = 0;
            for k in lo..=i {
                sab += a[k] * b[k];
                saa += a[k] * a[k];
                sbb += b[k] * b[k];
                nz_a += usize::from(a[k] != 0.0);
                nz_b += usize::from(b[k] != 0.0);
            }
        } else {
            sab += a[i] * b[i];
            saa += a[i] * a[i];
            sbb += b[i] * b[i];
            nz_a += usize::from(a[i] != 0.0);
            nz_b += usize::from(b[i] != 0.0);
            if i >= window {
                let k = i - window;
                sab -= a[k] * b[k];
                saa -= a[k] * a[k];
                sbb -= b[k] * b[k];
                nz_a -= usize::from(a[k] != 0.0);
                nz_b -= usize::from(b[k] != 0.0);
            }
        }
        if nz_a == 0 || nz_b == 0 {
            out.push(empty);
            continue;
        }
        let denom = (saa.max(0.0) * sbb.max(0.0)).sqrt();
        out.push(if denom > 0.0 {
            (sab.abs() / denom).min(1.0)
        } else {
            empty
        });
    }
    out
}

/// Normalized cross-correlation `|sum x d| / sqrt(sum x^2 sum d^2)` over the
/// trailing window. Low correlation means doubletalk. A window with zero
/// energy in either signal yields 1 (no declaration).
pub fn xcorr_statistic(far: &Signal, mic: &Signal, window: usize) -> Result<StatisticTrace> {
    check_lengths(far, mic, "microphone signal")?;
    if window < 2 {
        return Err(Error::invalid("cross-correlation window must be at least 2"));
    }
    Ok(StatisticTrace {
        values: windowed_ncc(far.samples(), mic.samples(), window, 1.0),
        orientation: Orientation::DeclareWhenBelow,
    })
}

/// Thresholds a statistic with strict inequality and extends each raw hit
/// forward by `hangover` samples.
pub fn decide(stat: &StatisticTrace, threshold: f64, hangover: usize) -> Result<ActivityVector> {
    if threshold.is_nan() {
        return Err(Error::invalid("threshold is NaN"));
    }
    let raw: ActivityVector = match stat.orientation {
        Orientation::DeclareWhenAbove => stat.values.iter().map(|&v| v > threshold).collect(),
        Orientation::DeclareWhenBelow => stat.values.iter().map(|&v| v < threshold).collect(),
    };
    Ok(raw.with_hangover(hangover))
}

/// Second stage that never separates change from doubletalk: `epsilon = 1`.
pub fn epcd_constant(len: usize) -> ActivityVector {
    ActivityVector::ones(len)
}

/// Ground-truth second stage: `epsilon = 0` exactly where a change window has no near-end speech.
pub fn epcd_oracle(c: &ActivityVector, v: &ActivityVector) -> Result<ActivityVector> {
    if c.len() != v.len() {
        return Err(Error::LengthMismatch {
            what: "near-end activity",
            expected: c.len(),
            found: v.len(),
        });
    }
    Ok(c.iter().zip(v.iter()).map(|(c, v)| !(c && !v)).collect())
}

/// Heuristic change statistic: normalized correlation between far-end and
/// canceller error over a trailing window. Right after a path change the
/// residual is mostly misadjusted echo and correlates with the far end; during
/// doubletalk it is dominated by near-end speech. Zero energy gives 0.
pub fn epcd_error_corr(far: &Signal, err: &Signal, window: usize) -> Result<StatisticTrace> {
    check_lengths(far, err, "error signal")?;
    if window < 2 {
        return Err(Error::invalid("error-correlation window must be at least 2"));
    }
    Ok(StatisticTrace {
        values: windowed_ncc(far.samples(), err.samples(), window, 0.0),
        orientation: Orientation::DeclareWhenAbove,
    })
}

/// Maps a change statistic to `epsilon`: a detection (per orientation, strict) means change, `epsilon = 0`.
pub fn epsilon_from_statistic(stat: &StatisticTrace, t2: f64) -> Result<ActivityVector> {
    Ok(decide(stat, t2, 0)?.not())
}

/// Detector output over one run.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTrace {
    pub phi: ActivityVector,
    /// Forced to 1 wherever `phi = 0`.
    pub epsilon: ActivityVector,
    pub t1: f64,
    pub t2: Option<f64>,
}

impl DecisionTrace {
    pub fn new(phi: ActivityVector, epsilon: ActivityVector, t1: f64, t2: Option<f64>) -> Result<Self> {
        if phi.len() != epsilon.len() {
            return Err(Error::LengthMismatch {
                what: "epsilon",
                expected: phi.len(),
                found: epsilon.len(),
            });
        }
        let epsilon = phi.iter().zip(epsilon.iter()).map(|(p, e)| e || !p).collect();
        Ok(Self { phi, epsilon, t1, t2 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(v: &[f64]) -> Signal {
        Signal::new(v.to_vec(), 8000).unwrap()
    }

    fn naive_geigel(x: &[f64], d: &[f64], w: usize, n: usize) -> f64 {
        let lo = (n + 1).saturating_sub(w);
        let peak = x[lo..=n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            d[n].abs() / peak
        } else if d[n] != 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }

    #[test]
    fn geigel_cases() {
        let x = sig(&[0.5, -0.2, 0.1, 0.0]);
        let zero = sig(&[0.0; 4]);
        let g = geigel_statistic(&x, &zero, 2).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));

        let d = sig(&[0.05, 0.05, 0.0, 0.0]);
        let g = geigel_statistic(&x, &d, 2).unwrap();
        assert!((g.values[0] - 0.1).abs() < 1e-15);
        assert!((g.values[1] - 0.1).abs() < 1e-15);

        let x = sig(&[0.0, 0.0, 0.0]);
        let d = sig(&[0.0, 0.2, 0.0]);
        let g = geigel_statistic(&x, &d, 2).unwrap();
        assert_eq!(g.values, vec![0.0, f64::INFINITY, 0.0]);
        let phi = decide(&g, 1e12, 0).unwrap();
        assert_eq!(phi, ActivityVector::from_u8(&[0, 1, 0]));
    }

    #[test]
    fn geigel_matches_naive_window_max() {
        let x: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect();
        let d: Vec<f64> = (0..300).map(|i| ((i * 13 % 29) as f64 - 14.0) / 30.0).collect();
        for w in [1, 2, 7, 64] {
            let g = geigel_statistic(&sig(&x), &sig(&d), w).unwrap();
            for n in 0..x.len() {
                assert_eq!(g.values[n], naive_geigel(&x, &d, w, n));
            }
        }
    }

    #[test]
    fn xcorr_cases() {
        let x: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
        let d: Vec<f64> = x.iter().map(|v| 2.5 * v).collect();
        let r = xcorr_statistic(&sig(&x), &sig(&d), 16).unwrap();
        for v in &r.values[1..] {
            assert!((v - 1.0).abs() < 1e-12);
        }

        let r = xcorr_statistic(&sig(&[1.0, 0.0, 1.0, 0.0]), &sig(&[0.0, 1.0, 0.0, 1.0]), 2).unwrap();
        assert_eq!(r.values, vec![1.0, 0.0, 0.0, 0.0]);

        let r = xcorr_statistic(&sig(&[1.0, 2.0, 2.0]), &sig(&[2.0, 1.0, 0.0]), 3).unwrap();
        assert!((r.values[2] - 4.0 / 45f64.sqrt()).abs() < 1e-12);
        assert!((r.values[2] - 0.5963).abs() < 1e-4);
    }

    #[test]
    fn xcorr_matches_direct_sums_over_long_runs() {
        let x: Vec<f64> = (0..2000).map(|i| ((i * 7919 % 1000) as f64 / 500.0 - 1.0) * if (i / 300) % 3 == 0 { 0.0 } else { 1.0 }).collect();
        let d: Vec<f64> = (0..2000).map(|i| ((i * 104_729 % 997) as f64 / 498.5 - 1.0) * 0.3 + 0.5 * x[i]).collect();
        let w = 50;
        let r = xcorr_statistic(&sig(&x), &sig(&d), w).unwrap();
        for n in 0..x.len() {
            let lo = (n + 1).saturating_sub(w);
            let sxd: f64 = (lo..=n).map(|k| x[k] * d[k]).sum();
            let sxx: f64 = (lo..=n).map(|k| x[k] * x[k]).sum();
            let sdd: f64 = (lo..=n).map(|k| d[k] * d[k]).sum();
            let expect = if sxx == 0.0 || sdd == 0.0 { 1.0 } else { sxd.abs() / (sxx * sdd).sqrt() };
            assert!((r.values[n] - expect).abs() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn decide_boundaries() {
        let stat = StatisticTrace {
            values: vec![0.5; 20],
            orientation: Orientation::DeclareWhenAbove,
        };
        assert_eq!(decide(&stat, 0.5, 0).unwrap().count_ones(), 0);
        assert_eq!(decide(&stat, f64::NEG_INFINITY, 0).unwrap(), ActivityVector::ones(20));
        assert!(decide(&stat, f64::NAN, 0).is_err());

        let mut values = vec![0.0; 20];
        values[10] = 1.0;
        let stat = StatisticTrace {
            values,
            orientation: Orientation::DeclareWhenAbove,
        };
        let phi = decide(&stat, 0.5, 5).unwrap();
        assert!(phi.iter().enumerate().all(|(n, b)| b == (10..=15).contains(&n)));
    }

    #[test]
    fn second_stage_generators() {
        assert_eq!(epcd_constant(5), ActivityVector::ones(5));
        let c = ActivityVector::zeros(4);
        let v = ActivityVector::from_u8(&[1, 0, 1, 0]);
        assert_eq!(epcd_oracle(&c, &v).unwrap(), ActivityVector::ones(4));
        let c = ActivityVector::ones(4);
        assert_eq!(epcd_oracle(&c, &ActivityVector::zeros(4)).unwrap(), ActivityVector::zeros(4));
        assert_eq!(epcd_oracle(&c, &v).unwrap(), ActivityVector::from_u8(&[1, 0, 1, 0]));
    }

    #[test]
    fn error_correlation_statistic() {
        let x: Vec<f64> = (0..400).map(|i| (i as f64 * 0.37).sin()).collect();
        let e: Vec<f64> = x.iter().map(|v| -0.3 * v).collect();
        let stat = epcd_error_corr(&sig(&x), &sig(&e), 100).unwrap();
        assert!(stat.values[10..].iter().all(|v| (v - 1.0).abs() < 1e-12));
        let eps = epsilon_from_statistic(&stat, 0.99).unwrap();
        // x(0) = 0, so the one-sample window at n = 0 has no energy.
        assert!(eps.get(0));
        assert!(eps.iter().skip(10).all(|e| !e));

        let zero = sig(&[0.0; 400]);
        let stat = epcd_error_corr(&sig(&x), &zero, 100).unwrap();
        assert!(stat.values.iter().all(|&v| v == 0.0));
        assert_eq!(epsilon_from_statistic(&stat, 0.5).unwrap(), ActivityVector::ones(400));
    }

    #[test]
    fn decision_trace_forces_epsilon_where_phi_is_zero() {
        let phi = ActivityVector::from_u8(&[0, 1, 0, 1]);
        let eps = ActivityVector::from_u8(&[0, 0, 0, 1]);
        let d = DecisionTrace::new(phi, eps, 0.5, Some(0.2)).unwrap();
        assert_eq!(d.epsilon, ActivityVector::from_u8(&[1, 0, 1, 1]));
    }
}
