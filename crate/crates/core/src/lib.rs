pub mod datasets;
pub mod error;
pub mod filters;
pub mod interpolation;
pub mod learning;
pub mod lie_groups;
pub mod numerics;
pub mod shift_operators;
pub mod signal_domain;

pub use error::{Error, Result};
