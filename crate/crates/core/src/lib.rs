pub mod api;
pub mod clustering;
pub mod complex;
pub mod cover;
pub mod diagnostics;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod multimapper;
pub mod session;
pub mod tower;
pub mod union_find;

pub use error::{Error, Result};
