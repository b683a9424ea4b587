pub mod autodiff;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod seed;
pub mod mdd;
pub mod model;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
