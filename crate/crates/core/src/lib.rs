//! Toy linear-attention models, Hessian landscape analysis, river-valley
//! gradient dynamics and staged Single-to-Looped training.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision instantiation used by the CLI.

pub mod alignment;
pub mod error;
pub mod experiments;
pub mod hessian;
pub mod io;
pub mod linalg;
pub mod markov;
pub mod model;
pub mod paths;
pub mod quad;
pub mod scalar;
pub mod shift;
pub mod train;

pub use error::{LabError, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Params64 = model::Params<f64>;
pub type Params32 = model::Params<f32>;
pub type Embedding64 = model::EmbeddingMap<f64>;
pub type Embedding32 = model::EmbeddingMap<f32>;
pub type QuadLandscape64 = quad::QuadLandscape<f64>;
pub type QuadLandscape32 = quad::QuadLandscape<f32>;
