//! Three-class ROC evaluation of doubletalk detectors in acoustic echo cancellation.
//!
//! A far-end/near-end scenario is simulated with a switched echo path and a
//! block NLMS canceller. Detector statistics are thresholded, every sample is
//! scored as far-end-only, doubletalk or echo-path-change, and the nine
//! conditional probabilities are reduced to Pareto fronts over the six
//! misclassification rates.

pub mod aecsim;
pub mod detectors;
pub mod error;
pub mod harness;
pub mod pareto;
pub mod rocprobs;
pub mod signalgen;

pub use error::{ConditionClass, Error, Result};
