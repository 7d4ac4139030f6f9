//! Spatio-temporal disaggregation of aggregated Gaussian observations with
//! sparse SPDE-based space-time GMRF priors.
//!
//! The sparse linear algebra and operator builders are generic over
//! [`Scalar`] (`f32` or `f64`); the statistical layers work in `f64`.

pub mod aggregate;
pub mod baseline;
pub mod error;
pub mod infer;
pub mod io;
pub mod lattice;
pub mod operators;
pub mod scalar;
pub mod simstudy;
pub mod sparsela;
pub mod stmodel;

pub use aggregate::{AggScheme, Projection};
pub use error::{Error, ErrorClass, Result};
pub use infer::{FitOptions, FitResult, ObsModel};
pub use lattice::{Extents, Field, LatticeSpec};
pub use scalar::Scalar;
pub use stmodel::{ModelKind, ModelSpec};

pub type SparseSymF64 = sparsela::SparseSym<f64>;
pub type SparseSymF32 = sparsela::SparseSym<f32>;
pub type CholFactorF64 = sparsela::CholFactor<f64>;
pub type CholFactorF32 = sparsela::CholFactor<f32>;
