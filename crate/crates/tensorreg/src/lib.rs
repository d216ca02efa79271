//! File formats, report emission and parallel experiment drivers on top of
//! `tensorreg-core`.

pub mod error;
pub mod io;
pub mod report;
pub mod run;

pub use error::{Error, Result};
pub use tensorreg_core as core;
