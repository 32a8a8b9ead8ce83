//! Monte Carlo simulator for drawdown, drawup and occupation-time functionals.
//!
//! Paths are driven by per-path generators derived from `(seed, path index)`, and work is
//! split into fixed chunks, so estimates are bit-identical for any number of threads.

pub mod config;
pub mod engine;
pub mod error;
pub mod functional;
pub mod ks;
pub mod path;

pub use config::{Scheme, SimConfig};
pub use engine::{estimate, estimate_many, sample, simulate_paths, trace, PathValue, Richardson, SimEstimate};
pub use error::{McError, Result};
pub use functional::Functional;
pub use ks::{ks_critical, ks_two_sample, KsTest};
pub use path::{crossing_probability, fraction_below, Step};
