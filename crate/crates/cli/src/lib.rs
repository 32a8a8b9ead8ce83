//! Command-line frontend: evaluate laws, price products, simulate, and verify.

pub mod args;
pub mod error;
pub mod expr;
pub mod grid;
pub mod model;
pub mod output;
pub mod run;
pub mod target;

pub use error::{CliError, Result};
pub use output::{from_csv, from_json, to_csv, to_json, Report, Row};
pub use run::{execute, main_with, render, Outcome};
pub use target::Target;

pub const EXIT_OK: i32 = 0;
/// A verification comparison exceeded its tolerance.
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
