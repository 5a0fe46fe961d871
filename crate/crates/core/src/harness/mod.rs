//! Scenario configuration, experiment pipeline and report emission.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod selfcheck;

pub use config::*;
pub use pipeline::*;
pub use report::*;
pub use selfcheck::*;
