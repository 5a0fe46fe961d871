//! Oracles shared by the integration tests.
#![allow(dead_code)]

use dtdroc::signalgen::ActivityVector;
use rand::Rng;

/// The six per-sample vectors of one run, as plain 0/1 integers.
#[derive(Debug, Clone)]
pub struct RawRun {
    pub x: Vec<u64>,
    pub v: Vec<u64>,
    pub y: Vec<u64>,
    pub c: Vec<u64>,
    pub phi: Vec<u64>,
    pub eps: Vec<u64>,
}

impl RawRun {
    pub fn random(rng: &mut impl Rng, len: usize) -> Self {
        // Independent densities per vector so that every class shows up in some runs
        // and is empty in others.
        let bits = |rng: &mut dyn rand::RngCore| {
            let p: f64 = rng.gen_range(0.0..=1.0);
            (0..len).map(|_| u64::from(rng.gen_bool(p))).collect::<Vec<_>>()
        };
        Self {
            x: bits(rng),
            v: bits(rng),
            y: bits(rng),
            c: bits(rng),
            phi: bits(rng),
            eps: bits(rng),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn vec(bits: &[u64]) -> ActivityVector {
        bits.iter().map(|&b| b == 1).collect()
    }

    pub fn vectors(&self) -> [ActivityVector; 6] {
        [&self.x, &self.v, &self.y, &self.c, &self.phi, &self.eps].map(|b| Self::vec(b))
    }
}

/// The three-class table evaluated term by term from the materialized vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveTable {
    /// Numerators, row-major: far, doubletalk, change rows; far, double, change columns.
    pub num: [[u64; 3]; 3],
    pub den: [u64; 3],
}

impl NaiveTable {
    pub fn of(r: &RawRun) -> Self {
        let n = r.len();
        let not = |a: u64| 1 - a;
        let sum = |f: &dyn Fn(usize) -> u64| (0..n).map(f).sum::<u64>();
        let (x, v, y, c, p, e) = (&r.x, &r.v, &r.y, &r.c, &r.phi, &r.eps);
        let cols = |row: &dyn Fn(usize) -> u64| {
            [
                sum(&|i| row(i) * not(p[i])),
                sum(&|i| row(i) * p[i] * e[i]),
                sum(&|i| row(i) * p[i] * not(e[i])),
            ]
        };
        let far = |i: usize| x[i] * not(v[i]) * not(c[i]);
        let dbl = |i: usize| x[i] * v[i];
        let chg = |i: usize| x[i] * not(v[i]) * c[i];
        let chg_den = |i: usize| (x[i] + not(x[i]) * not(y[i])) * not(v[i]) * c[i];
        Self {
            num: [cols(&far), cols(&dbl), cols(&chg)],
            den: [sum(&far), sum(&dbl), sum(&chg_den)],
        }
    }

    /// Nine probabilities in row-major order; an empty row reads as zeros.
    pub fn probs(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                out[row * 3 + col] = if self.den[row] == 0 {
                    0.0
                } else {
                    self.num[row][col] as f64 / self.den[row] as f64
                };
            }
        }
        out
    }
}

/// O(n^2) non-dominated filter with first-wins deduplication.
pub fn brute_front(points: &[[f64; 6]]) -> Vec<[f64; 6]> {
    let dominates = |a: &[f64; 6], b: &[f64; 6]| {
        a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
    };
    let mut out: Vec<[f64; 6]> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if points.iter().any(|q| dominates(q, p)) {
            continue;
        }
        if points[..i].iter().any(|q| q == p) {
            continue;
        }
        out.push(*p);
    }
    out
}

pub fn sorted(mut v: Vec<[f64; 6]>) -> Vec<[f64; 6]> {
    v.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    v
}
