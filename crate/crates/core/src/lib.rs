//! Numerical laboratory for norm-inflation experiments in the 3D
//! incompressible MHD system on the torus `[0, 2π)³`.
//!
//! The crate has two field engines that cross-validate each other:
//!
//! * an exact engine over finite sums of plane waves whose time coefficients
//!   are exponential polynomials ([`expoly`], [`trig`]) — heat flow, Leray
//!   projection, advection products and Duhamel integrals all stay in closed
//!   form;
//! * a pseudo-spectral engine on an N³ periodic grid ([`grid`]) integrating
//!   the full system with an exponential integrating factor.
//!
//! On top of those sit the caloric-extension norms ([`norms`]), the
//! plane-wave-cascade initial data and its closed-form first Picard iterates
//! ([`construction`]), the mild-solution machinery and audits ([`mild`]), and
//! the batch scenario runner ([`experiments`]).

pub mod construction;
pub mod error;
pub mod expoly;
pub mod experiments;
pub mod grid;
pub mod lattice;
pub mod mild;
pub mod norms;
pub mod trig;

pub use error::{Error, Result};
