//! Pareto fronts over the six misclassification rates.
//!
//! Threshold pairs are folded through a non-dominated archive: a candidate is
//! admitted unless some member is at least as good on every rate, and on
//! admission every member it strictly dominates is evicted. The fold yields
//! the exact non-dominated subset regardless of evaluation order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rocprobs::{misclass_vector, Rate, RateVector, ThreeClassProbs};

/// One evaluated threshold pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub detector: String,
    pub t1: f64,
    pub t2: Option<f64>,
    pub rates: RateVector,
    pub probs: ThreeClassProbs,
    /// False when the second stage is constant, making `p_fc` and `p_dc` structurally zero.
    pub discriminates_change: bool,
}

impl OperatingPoint {
    pub fn new(
        detector: impl Into<String>,
        t1: f64,
        t2: Option<f64>,
        probs: ThreeClassProbs,
        discriminates_change: bool,
    ) -> Self {
        Self {
            detector: detector.into(),
            t1,
            t2,
            rates: misclass_vector(&probs),
            probs,
            discriminates_change,
        }
    }

    pub fn px_py(&self) -> (f64, f64) {
        aggregate_px_py(&self.rates)
    }
}

/// Relation of `a` to `b` when every rate is to be minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    /// `a` is no worse anywhere and better somewhere.
    Strict,
    /// `a` equals `b` on every rate.
    Weak,
    None,
}

pub fn dominance(a: &RateVector, b: &RateVector) -> Dominance {
    let mut better = false;
    for (x, y) in a.0.iter().zip(&b.0) {
        if x > y {
            return Dominance::None;
        }
        better |= x < y;
    }
    if better {
        Dominance::Strict
    } else {
        Dominance::Weak
    }
}

/// Mutually non-dominating operating points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    points: Vec<OperatingPoint>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn points(&self) -> &[OperatingPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<OperatingPoint> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Offers `p` to the archive; returns whether it was admitted.
    pub fn insert(&mut self, p: OperatingPoint) -> bool {
        if self
            .points
            .iter()
            .any(|m| dominance(&m.rates, &p.rates) != Dominance::None)
        {
            return false;
        }
        self.points
            .retain(|m| dominance(&p.rates, &m.rates) != Dominance::Strict);
        self.points.push(p);
        true
    }

    /// Sorted by (t1, t2, detector) for stable output.
    pub fn sorted(&self) -> Vec<&OperatingPoint> {
        let mut v: Vec<&OperatingPoint> = self.points.iter().collect();
        v.sort_by(|a, b| {
            a.detector
                .cmp(&b.detector)
                .then(a.t1.total_cmp(&b.t1))
                .then(a.t2.unwrap_or(f64::NAN).total_cmp(&b.t2.unwrap_or(f64::NAN)))
        });
        v
    }
}

impl FromIterator<OperatingPoint> for ParetoArchive {
    fn from_iter<I: IntoIterator<Item = OperatingPoint>>(iter: I) -> Self {
        let mut a = ParetoArchive::new();
        for p in iter {
            a.insert(p);
        }
        a
    }
}

pub fn archive_insert(mut f: ParetoArchive, p: OperatingPoint) -> ParetoArchive {
    f.insert(p);
    f
}

/// Evaluates every grid pair and folds the results into an archive.
/// Without a T2 grid, `eval` is called with `None` for T2.
pub fn build_front<F>(mut eval: F, t1_grid: &[f64], t2_grid: Option<&[f64]>) -> Result<ParetoArchive>
where
    F: FnMut(f64, Option<f64>) -> Result<OperatingPoint>,
{
    if t1_grid.is_empty() || t2_grid.is_some_and(|g| g.is_empty()) {
        return Err(Error::invalid("threshold grids must be nonempty"));
    }
    if t1_grid.iter().chain(t2_grid.unwrap_or(&[])).any(|t| !t.is_finite()) {
        return Err(Error::invalid("threshold grids must be finite"));
    }
    let mut front = ParetoArchive::new();
    for &t1 in t1_grid {
        match t2_grid {
            None => {
                front.insert(eval(t1, None)?);
            }
            Some(g) => {
                for &t2 in g {
                    front.insert(eval(t1, Some(t2))?);
                }
            }
        }
    }
    Ok(front)
}

/// Non-dominated subset of the union; each point keeps its detector label.
pub fn merge_fronts(f1: &ParetoArchive, f2: &ParetoArchive) -> ParetoArchive {
    let mut merged = f1.clone();
    for p in f2.points() {
        merged.insert(p.clone());
    }
    merged
}

/// Keeps points whose `p_fd`, `p_fc` and `p_cf` lie in `[low, high]`.
pub fn band_filter(f: &ParetoArchive, low: f64, high: f64) -> ParetoArchive {
    band_filter_on(f, &[Rate::Fd, Rate::Fc, Rate::Cf], low, high)
}

/// Band filter over a chosen subset of rates. A structurally zero `p_fc`
/// (constant second stage) is exempt from the lower bound.
pub fn band_filter_on(f: &ParetoArchive, rates: &[Rate], low: f64, high: f64) -> ParetoArchive {
    let points = f
        .points()
        .iter()
        .filter(|p| {
            rates.iter().all(|&r| {
                let v = p.rates.get(r);
                let exempt = r == Rate::Fc && v == 0.0 && !p.discriminates_change;
                v <= high && (v >= low || exempt)
            })
        })
        .cloned()
        .collect();
    ParetoArchive { points }
}

/// Equal-cost projection: `px = (p_fd + p_fc + p_cf) / 3`, `py = (p_df + p_dc + p_cd) / 3`.
pub fn aggregate_px_py(rates: &RateVector) -> (f64, f64) {
    let r = |k: Rate| rates.get(k);
    (
        (r(Rate::Fd) + r(Rate::Fc) + r(Rate::Cf)) / 3.0,
        (r(Rate::Df) + r(Rate::Dc) + r(Rate::Cd)) / 3.0,
    )
}

/// A front point after projection onto (px, py).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub detector: String,
    pub t1: f64,
    pub t2: Option<f64>,
    pub px: f64,
    pub py: f64,
}

/// Two-dimensional non-dominated projection of a front, sorted by ascending
/// `px` (and so strictly descending `py`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Staircase {
    pub points: Vec<ProjectedPoint>,
}

impl Staircase {
    pub fn from_front(f: &ParetoArchive) -> Self {
        let mut all: Vec<ProjectedPoint> = f
            .points()
            .iter()
            .map(|p| {
                let (px, py) = p.px_py();
                ProjectedPoint {
                    detector: p.detector.clone(),
                    t1: p.t1,
                    t2: p.t2,
                    px,
                    py,
                }
            })
            .collect();
        all.sort_by(|a, b| {
            a.px.total_cmp(&b.px)
                .then(a.py.total_cmp(&b.py))
                .then(a.t1.total_cmp(&b.t1))
        });
        let mut points: Vec<ProjectedPoint> = Vec::new();
        for p in all {
            if points.last().is_none_or(|q| p.py < q.py) {
                points.push(p);
            }
        }
        Self { points }
    }

    /// Lowest `py` reachable at or below `px`; `None` left of the first point.
    pub fn py_at(&self, px: f64) -> Option<f64> {
        let idx = self.points.partition_point(|p| p.px <= px);
        (idx > 0).then(|| self.points[idx - 1].py)
    }

    /// Average of [`Self::py_at`] over `samples` evenly spaced points of `[lo, hi]`.
    pub fn mean_py_over(&self, lo: f64, hi: f64, samples: usize) -> Option<f64> {
        let n = samples.max(2);
        let mut sum = 0.0;
        for i in 0..n {
            let px = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            sum += self.py_at(px)?;
        }
        Some(sum / n as f64)
    }
}
