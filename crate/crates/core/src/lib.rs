//! Hermite processes built from discretized multiple Wiener-Ito integrals,
//! Skorokhod integrals of elementary processes against them, and p-variation
//! statistics.

pub mod chaos;
pub mod error;
pub mod grid;
pub mod hermite_kernel;
pub mod malliavin;
pub mod randomness;
pub mod special_math;
pub mod stats;
pub mod variation;

pub use error::{Error, Result};
