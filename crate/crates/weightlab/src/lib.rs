//! A desk-scale numerical laboratory for matrix Muckenhoupt weights on
//! finite dyadic lattices.
//!
//! Everything lives on `[0,1)^d` (`d = 1, 2`) discretized to a dyadic grid;
//! fields are constant on finest cells, so averages, maximal functions,
//! stopping times, sparse operators and convex body averages are all exact
//! finite sums. The crate provides:
//!
//! - [`grid`]: dyadic lattice, cubes, scalar/vector fields;
//! - [`weights`]: matrix weights and their characteristics (A_p, A_1,
//!   Fujii–Wilson A_inf, scalar-A_inf classes) plus weight generators;
//! - [`reducing`]: reducing operators via exact quadratic forms (p = 2) or
//!   sampled John-ellipsoid fits, with duality checks;
//! - [`orlicz`]: power-type Young functions, Luxemburg averages, Orlicz
//!   maximal operators and nested bump norms;
//! - [`convex_body`]: zonotope and support-sampled convex body averages,
//!   Minkowski sums, membership and pairing intervals;
//! - [`sparse`]: sparse/Carleson families, the stopping-time construction,
//!   sparse operators and bump-condition bounds;
//! - [`operators`]: martingale transforms, maximal operators, grand maximal
//!   functions, sparse domination and the block-matrix commutator lift;
//! - [`lab`]: verification harness, operator-norm lower bounds, exact
//!   rough-exponent algebra, sweeps, CSV/SVG reporting.
//!
//! The `weightlab` binary exposes the harness as a small CLI; the examples
//! directory walks through each capability.

pub mod convex_body;
pub mod error;
pub mod grid;
pub mod lab;
pub mod linalg;
pub mod operators;
pub mod orlicz;
pub mod reducing;
pub mod sparse;
pub mod weights;

pub use error::{Error, Result};
