//! Two immiscible compressible fluids filtering through a periodic elastic
//! skeleton: microscopic solver, mollified viscosity transport and periodic
//! homogenization on uniform Cartesian grids.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the `*64` aliases
//! below fix the double-precision instantiation used by the CLI and tests.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod grid_core;
pub mod harness;
pub mod homogenize;
pub mod microsim;
pub mod mollifier;
pub mod rng;
pub mod scalar;
pub mod solver;
pub mod transport;

pub use error::{Error, Result};
pub use grid_core::{Grid, NodalField, ScalarField, SymTensorField, VectorField};
pub use scalar::Real;

pub type ScalarField64 = ScalarField<f64>;
pub type VectorField64 = VectorField<f64>;
pub type SymTensorField64 = SymTensorField<f64>;
pub type PhaseMask64 = geometry::PhaseMask<f64>;

pub type ScalarField32 = ScalarField<f32>;
pub type VectorField32 = VectorField<f32>;
pub type SymTensorField32 = SymTensorField<f32>;
