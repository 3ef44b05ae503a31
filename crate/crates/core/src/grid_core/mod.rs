//! Uniform-grid field containers and the discrete differential and tensor operators.

mod field;
mod grid;
mod ops;

pub use field::{NodalField, ScalarField, SymTensorField, VectorField};
pub use grid::{sym_index, Grid, Side};
pub use ops::{contract, divergence, gradient, inner, integral, l1_norm, l2_norm, partial, sym_gradient};
