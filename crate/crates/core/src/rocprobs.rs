//! Three-class ROC probabilities and their binary-ROC reductions.
//!
//! All quantities come from integer sample counts; each probability is a
//! single division of two counts, so row normalization holds exactly.

use serde::{Deserialize, Serialize};

use crate::error::{ConditionClass, Error, Result};
use crate::signalgen::ActivityVector;

/// Ground-truth labels of one run: far-end VAD `x`, near-end VAD `v`,
/// echo VAD `y` and change indicator `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub x: ActivityVector,
    pub v: ActivityVector,
    pub y: ActivityVector,
    pub c: ActivityVector,
}

impl GroundTruth {
    pub fn new(
        x: ActivityVector,
        v: ActivityVector,
        y: ActivityVector,
        c: ActivityVector,
    ) -> Result<Self> {
        let n = x.len();
        for (what, vec) in [
            ("near-end activity", &v),
            ("echo activity", &y),
            ("change indicator", &c),
        ] {
            if vec.len() != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    found: vec.len(),
                });
            }
        }
        Ok(Self { x, v, y, c })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Same labels with a different change indicator.
    pub fn with_change(&self, c: ActivityVector) -> Result<Self> {
        Self::new(self.x.clone(), self.v.clone(), self.y.clone(), c)
    }

    /// Counts every term of the three-class table for the given detector outputs.
    pub fn counts(&self, phi: &ActivityVector, epsilon: &ActivityVector) -> Result<ConditionCounts> {
        for (what, vec) in [("phi", phi), ("epsilon", epsilon)] {
            if vec.len() != self.len() {
                return Err(Error::LengthMismatch {
                    what,
                    expected: self.len(),
                    found: vec.len(),
                });
            }
        }
        let mut acc = ConditionCounts::default();
        for n in 0..self.len() {
            acc.push(
                self.x.get(n),
                self.v.get(n),
                self.y.get(n),
                self.c.get(n),
                phi.get(n),
                epsilon.get(n),
            );
        }
        Ok(acc)
    }

    /// Denominator counts only; detector outputs do not enter them.
    pub fn class_sizes(&self) -> ConditionCounts {
        let n = self.len();
        let ones = ActivityVector::ones(n);
        self.counts(&ones, &ones).expect("lengths match")
    }
}

/// The six vectors of one evaluated run.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRun {
    pub truth: GroundTruth,
    pub phi: ActivityVector,
    pub epsilon: ActivityVector,
}

impl LabeledRun {
    pub fn new(truth: GroundTruth, phi: ActivityVector, epsilon: ActivityVector) -> Result<Self> {
        truth.counts(&phi, &epsilon)?;
        Ok(Self { truth, phi, epsilon })
    }

    pub fn from_vectors(
        x: ActivityVector,
        v: ActivityVector,
        y: ActivityVector,
        c: ActivityVector,
        phi: ActivityVector,
        epsilon: ActivityVector,
    ) -> Result<Self> {
        Self::new(GroundTruth::new(x, v, y, c)?, phi, epsilon)
    }

    /// Total sample count.
    pub fn n_total(&self) -> usize {
        self.truth.len()
    }

    pub fn counts(&self) -> ConditionCounts {
        self.truth.counts(&self.phi, &self.epsilon).expect("validated at construction")
    }
}

/// Single-pass tally of every numerator and denominator of the three-class table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionCounts {
    pub n_total: u64,
    /// `sum x`
    pub x_active: u64,
    /// `sum x.phi`
    pub x_phi: u64,

    /// `sum x.!v.!c`
    pub far: u64,
    pub far_as_far: u64,
    pub far_as_double: u64,
    pub far_as_change: u64,

    /// `sum x.v`
    pub double: u64,
    pub double_as_far: u64,
    pub double_as_double: u64,
    pub double_as_change: u64,

    /// `sum (x + !x.!y).!v.c`
    pub change_denom: u64,
    /// `sum x.!v.c`
    pub change_far_active: u64,
    pub change_as_far: u64,
    pub change_as_double: u64,
    pub change_as_change: u64,
}

impl ConditionCounts {
    #[inline]
    pub fn push(&mut self, x: bool, v: bool, y: bool, c: bool, phi: bool, eps: bool) {
        self.n_total += 1;
        let verdict = |far: &mut u64, dbl: &mut u64, chg: &mut u64| {
            if !phi {
                *far += 1;
            } else if eps {
                *dbl += 1;
            } else {
                *chg += 1;
            }
        };
        if x {
            self.x_active += 1;
            self.x_phi += u64::from(phi);
            if v {
                self.double += 1;
                verdict(
                    &mut self.double_as_far,
                    &mut self.double_as_double,
                    &mut self.double_as_change,
                );
            } else if c {
                self.change_denom += 1;
                self.change_far_active += 1;
                verdict(
                    &mut self.change_as_far,
                    &mut self.change_as_double,
                    &mut self.change_as_change,
                );
            } else {
                self.far += 1;
                verdict(
                    &mut self.far_as_far,
                    &mut self.far_as_double,
                    &mut self.far_as_change,
                );
            }
        } else if !y && !v && c {
            self.change_denom += 1;
        }
    }
}

/// How to treat a ground-truth class with no samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmptyClassPolicy {
    /// Fail with [`Error::EmptyConditionClass`].
    Reject,
    /// Report every probability of that row as 0.
    ZeroRow,
}

/// The nine conditional probabilities of the three-class ROC, row = truth, column = decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeClassProbs {
    pub p_ff: f64,
    pub p_fd: f64,
    pub p_fc: f64,
    pub p_df: f64,
    pub p_dd: f64,
    pub p_dc: f64,
    pub p_cf: f64,
    pub p_cd: f64,
    pub p_cc: f64,
    pub denom_far: u64,
    pub denom_dbl: u64,
    pub denom_chg: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ThreeClassProbs {
    pub fn from_counts(k: &ConditionCounts, policy: EmptyClassPolicy) -> Result<Self> {
        if policy == EmptyClassPolicy::Reject {
            for (den, class) in [
                (k.far, ConditionClass::Far),
                (k.double, ConditionClass::Doubletalk),
                (k.change_denom, ConditionClass::Change),
            ] {
                if den == 0 {
                    return Err(Error::EmptyConditionClass(class));
                }
            }
        }
        Ok(Self {
            p_ff: ratio(k.far_as_far, k.far),
            p_fd: ratio(k.far_as_double, k.far),
            p_fc: ratio(k.far_as_change, k.far),
            p_df: ratio(k.double_as_far, k.double),
            p_dd: ratio(k.double_as_double, k.double),
            p_dc: ratio(k.double_as_change, k.double),
            p_cf: ratio(k.change_as_far, k.change_denom),
            p_cd: ratio(k.change_as_double, k.change_denom),
            p_cc: ratio(k.change_as_change, k.change_denom),
            denom_far: k.far,
            denom_dbl: k.double,
            denom_chg: k.change_denom,
        })
    }
}

/// The nine probabilities; every condition class must be non-empty.
pub fn three_class_probs(run: &LabeledRun) -> Result<ThreeClassProbs> {
    ThreeClassProbs::from_counts(&run.counts(), EmptyClassPolicy::Reject)
}

pub fn three_class_probs_with(run: &LabeledRun, policy: EmptyClassPolicy) -> Result<ThreeClassProbs> {
    ThreeClassProbs::from_counts(&run.counts(), policy)
}

/// Classical two-class operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryRoc {
    pub p_f: f64,
    pub p_m: f64,
}

/// `p_f = sum x.phi / N` and `p_m = 1 - sum x.v.phi / sum x.v`.
pub fn binary_roc(run: &LabeledRun) -> Result<BinaryRoc> {
    binary_roc_from_counts(&run.counts())
}

pub fn binary_roc_from_counts(k: &ConditionCounts) -> Result<BinaryRoc> {
    if k.double == 0 {
        return Err(Error::EmptyConditionClass(ConditionClass::Doubletalk));
    }
    // sum x.v - sum x.v.phi is exactly the undetected doubletalk count.
    Ok(BinaryRoc {
        p_f: ratio(k.x_phi, k.n_total),
        p_m: ratio(k.double_as_far, k.double),
    })
}

/// False-alarm rate over far-end-active samples, `sum x.phi / sum x`.
pub fn false_alarm_over_far_active(run: &LabeledRun) -> Result<f64> {
    let k = run.counts();
    if k.x_active == 0 {
        return Err(Error::EmptyConditionClass(ConditionClass::Far));
    }
    Ok(ratio(k.x_phi, k.x_active))
}

/// `P_false = p_fd + p_cd`.
pub fn reduce_p_false(probs: &ThreeClassProbs) -> f64 {
    probs.p_fd + probs.p_cd
}

/// `P_miss = p_df + p_dc`.
pub fn reduce_p_miss(probs: &ThreeClassProbs) -> f64 {
    probs.p_df + probs.p_dc
}

/// Deviations of each truth row of the table from summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationResiduals {
    pub far: f64,
    pub doubletalk: f64,
    pub change: f64,
    /// `p_cf + p_cd + p_cc`, which equals `sum x.!v.c / sum (x + !x.!y).!v.c`.
    pub change_row_sum: f64,
}

/// Row-sum residuals, evaluated on the integer counts of `run`.
///
/// The far and doubletalk rows always sum to one. The change row's
/// numerators only see far-active samples while its denominator also counts
/// samples where both far end and echo are silent, so it falls short of one
/// by exactly that share.
pub fn normalization_residuals(probs: &ThreeClassProbs, run: &LabeledRun) -> Result<NormalizationResiduals> {
    let k = run.counts();
    if (k.far, k.double, k.change_denom) != (probs.denom_far, probs.denom_dbl, probs.denom_chg) {
        return Err(Error::invalid("probabilities were not computed from this run"));
    }
    Ok(residuals_from_counts(&k))
}

/// Row-sum residuals straight from a tally.
pub fn residuals_from_counts(k: &ConditionCounts) -> NormalizationResiduals {
    let row = |sum: u64, den: u64| -> f64 {
        if den == 0 {
            0.0
        } else {
            sum.abs_diff(den) as f64 / den as f64
        }
    };
    NormalizationResiduals {
        far: row(k.far_as_far + k.far_as_double + k.far_as_change, k.far),
        doubletalk: row(
            k.double_as_far + k.double_as_double + k.double_as_change,
            k.double,
        ),
        change: row(
            k.change_as_far + k.change_as_double + k.change_as_change,
            k.change_denom,
        ),
        change_row_sum: ratio(k.change_far_active, k.change_denom),
    }
}

/// Misclassification rates in the fixed order `(p_fd, p_fc, p_df, p_dc, p_cf, p_cd)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateVector(pub [f64; 6]);

/// Positions within a [`RateVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rate {
    Fd = 0,
    Fc = 1,
    Df = 2,
    Dc = 3,
    Cf = 4,
    Cd = 5,
}

impl RateVector {
    pub fn get(&self, r: Rate) -> f64 {
        self.0[r as usize]
    }
}

pub fn misclass_vector(probs: &ThreeClassProbs) -> RateVector {
    RateVector([probs.p_fd, probs.p_fc, probs.p_df, probs.p_dc, probs.p_cf, probs.p_cd])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn av(b: &[u8]) -> ActivityVector {
        ActivityVector::from_u8(b)
    }

    fn example_run() -> LabeledRun {
        LabeledRun::from_vectors(
            av(&[1, 1, 1, 1, 1, 1, 0, 0]),
            av(&[0, 0, 1, 1, 0, 0, 0, 0]),
            av(&[1, 1, 1, 1, 1, 1, 0, 0]),
            av(&[0, 0, 0, 0, 1, 1, 1, 1]),
            av(&[0, 1, 1, 1, 1, 0, 0, 0]),
            av(&[1, 1, 1, 0, 0, 1, 1, 1]),
        )
        .unwrap()
    }

    #[test]
    fn hand_counted_example() {
        let p = three_class_probs(&example_run()).unwrap();
        let expect = [0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.25, 0.0, 0.25];
        let got = [p.p_ff, p.p_fd, p.p_fc, p.p_df, p.p_dd, p.p_dc, p.p_cf, p.p_cd, p.p_cc];
        assert_eq!(got, expect);
        assert_eq!((p.denom_far, p.denom_dbl, p.denom_chg), (2, 2, 4));
    }

    #[test]
    fn always_far_detector() {
        let base = example_run();
        let run = LabeledRun::new(base.truth.clone(), ActivityVector::zeros(8), ActivityVector::ones(8)).unwrap();
        let p = three_class_probs(&run).unwrap();
        assert_eq!((p.p_ff, p.p_df), (1.0, 1.0));
        assert_eq!(p.p_cf, 2.0 / 4.0);
        assert_eq!([p.p_fd, p.p_fc, p.p_dd, p.p_dc, p.p_cd, p.p_cc], [0.0; 6]);
    }

    #[test]
    fn perfect_detector() {
        let x = av(&[1, 1, 1, 1, 1, 1, 1, 1]);
        let v = av(&[0, 0, 1, 1, 0, 0, 0, 1]);
        let c = av(&[0, 0, 0, 0, 1, 1, 1, 1]);
        let y = x.clone();
        let phi = v.or(&c.and(&v.not())).and(&x);
        let eps = crate::detectors::epcd_oracle(&c, &v).unwrap();
        let run = LabeledRun::from_vectors(x, v, y, c, phi, eps).unwrap();
        let p = three_class_probs(&run).unwrap();
        assert_eq!((p.p_ff, p.p_dd, p.p_cc), (1.0, 1.0, 1.0));
        assert_eq!(misclass_vector(&p), RateVector([0.0; 6]));
    }

    #[test]
    fn empty_classes_are_named() {
        let run = LabeledRun::from_vectors(
            av(&[1, 1]),
            av(&[0, 0]),
            av(&[1, 1]),
            av(&[0, 1]),
            av(&[0, 0]),
            av(&[1, 1]),
        )
        .unwrap();
        let err = three_class_probs(&run).unwrap_err();
        assert_eq!(err.to_string(), "empty condition class: doubletalk");
        let p = three_class_probs_with(&run, EmptyClassPolicy::ZeroRow).unwrap();
        assert_eq!((p.p_df, p.p_dd, p.p_dc), (0.0, 0.0, 0.0));
        assert!(binary_roc(&run).is_err());
    }

    #[test]
    fn binary_roc_cases() {
        let run = LabeledRun::from_vectors(
            av(&[1, 1, 0, 0]),
            av(&[0, 1, 0, 0]),
            av(&[1, 1, 0, 0]),
            av(&[0, 0, 0, 0]),
            av(&[1, 1, 0, 0]),
            av(&[1, 1, 1, 1]),
        )
        .unwrap();
        assert_eq!(binary_roc(&run).unwrap(), BinaryRoc { p_f: 0.5, p_m: 0.0 });

        let none = LabeledRun::new(run.truth.clone(), ActivityVector::zeros(4), ActivityVector::ones(4)).unwrap();
        assert_eq!(binary_roc(&none).unwrap(), BinaryRoc { p_f: 0.0, p_m: 1.0 });
        let all = LabeledRun::new(run.truth.clone(), ActivityVector::ones(4), ActivityVector::ones(4)).unwrap();
        assert_eq!(binary_roc(&all).unwrap(), BinaryRoc { p_f: 0.5, p_m: 0.0 });
    }

    #[test]
    fn reductions() {
        let mut p = three_class_probs(&example_run()).unwrap();
        p.p_fd = 0.2;
        p.p_cd = 0.05;
        assert!((reduce_p_false(&p) - 0.25).abs() < 1e-15);
        p.p_df = 0.7;
        p.p_dc = 0.1;
        assert!((reduce_p_miss(&p) - 0.8).abs() < 1e-15);
        // Published operating points.
        p.p_fd = 0.148;
        p.p_cd = 0.067;
        assert!((reduce_p_false(&p) - 0.215).abs() < 1e-12);
        p.p_df = 0.743;
        p.p_dc = 0.0;
        assert_eq!(reduce_p_miss(&p), 0.743);
    }

    #[test]
    fn residuals_on_example() {
        let run = example_run();
        let p = three_class_probs(&run).unwrap();
        let r = normalization_residuals(&p, &run).unwrap();
        assert_eq!((r.far, r.doubletalk), (0.0, 0.0));
        assert_eq!(r.change_row_sum, 0.5);
        assert_eq!(r.change, 0.5);
        assert_eq!(p.p_cf + p.p_cd + p.p_cc, 0.5);
    }

    #[test]
    fn change_row_sums_to_one_when_echo_covers_far_pauses() {
        let mut run = example_run();
        // Echo active wherever far end is silent inside the change window.
        run.truth.y = av(&[1, 1, 1, 1, 1, 1, 1, 1]);
        let p = three_class_probs(&run).unwrap();
        let r = normalization_residuals(&p, &run).unwrap();
        assert_eq!(r.change, 0.0);
        assert_eq!(p.p_cf + p.p_cd + p.p_cc, 1.0);
    }

    #[test]
    fn epsilon_outside_phi_is_unobservable() {
        let run = example_run();
        let flipped: ActivityVector = run
            .phi
            .iter()
            .zip(run.epsilon.iter())
            .map(|(p, e)| if p { e } else { !e })
            .collect();
        let other = LabeledRun::new(run.truth.clone(), run.phi.clone(), flipped).unwrap();
        assert_eq!(three_class_probs(&run).unwrap(), three_class_probs(&other).unwrap());
    }

    #[test]
    fn constant_second_stage_has_no_change_decisions() {
        let run = example_run();
        let run = LabeledRun::new(run.truth.clone(), run.phi.clone(), ActivityVector::ones(8)).unwrap();
        let p = three_class_probs(&run).unwrap();
        assert_eq!((p.p_fc, p.p_dc, p.p_cc), (0.0, 0.0, 0.0));
        let all = LabeledRun::new(run.truth.clone(), ActivityVector::ones(8), ActivityVector::ones(8)).unwrap();
        assert_eq!(three_class_probs(&all).unwrap().p_dd, 1.0);
    }

    #[test]
    fn published_rate_vectors() {
        let mut p = three_class_probs(&example_run()).unwrap();
        (p.p_fd, p.p_fc, p.p_df, p.p_dc, p.p_cf, p.p_cd) = (0.196, 0.0, 0.857, 0.0, 0.417, 0.050);
        assert_eq!(misclass_vector(&p), RateVector([0.196, 0.0, 0.857, 0.0, 0.417, 0.050]));
        assert_eq!(misclass_vector(&p).get(Rate::Cf), 0.417);
    }
}
