//! Analytics for multi-operator vehicular drive tests.

pub mod cm;
pub mod error;
pub mod eval;
pub mod grid;
pub mod learners;
pub mod select;
pub mod trace;

pub use error::{Error, Result};
