//! Learning discrete Lagrangian densities of lattice field theories from
//! trajectory data, and simulating with the learned models.
//!
//! The crate covers the full loop: reference data generation for discrete
//! wave and Schrödinger equations, density models (analytic and neural) with
//! exact input derivatives, conditioning-aware training losses, variational
//! integrators driven by learned densities, travelling-wave identification,
//! and a proper-orthogonal-decomposition baseline for model reduction.

pub mod density;
pub mod error;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod mlp;
pub mod rom;
pub mod scalar;
pub mod seed;
pub mod slice;
pub mod solver;
pub mod tape;
pub mod theory;
pub mod train;
pub mod tw;

pub use error::{Error, Result};
