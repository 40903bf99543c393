//! Numerical laboratory for weak solutions of the two-dimensional eikonal
//! equation `|m| = 1`, `div m = 0`.
//!
//! The crate builds canonical solutions (constant, vortex, two-state jump),
//! mollifies them, and measures the quantities that control their
//! regularity: finite-difference Besov rates, entropy productions, the
//! kinetic measure, characteristic curves of the mollified potential and
//! covering counts of the oscillation set.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod besov;
pub mod cli;
pub mod covering;
pub mod error;
pub mod fit;
pub mod flow;
pub mod grid;
pub mod io;
pub mod kinetic;
pub mod mollify;
pub mod solutions;
pub mod suite;

pub use error::{Error, Result};
pub use grid::{Domain, Field, Grid2, ScalarField, UnitVectorField, Vec2, VectorField};
