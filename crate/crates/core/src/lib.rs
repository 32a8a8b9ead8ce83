pub mod closedform;
pub mod error;
pub mod inversion;
pub mod law;
pub mod model;
pub mod numeigen;
pub mod occupation;
pub mod passage;
pub mod pricing;
pub mod quad;

pub use error::{Error, Result};
