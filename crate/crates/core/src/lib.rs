//! Lognormal multiscale diffusion, Petrov-Galerkin LOD surrogates and their
//! neural-network compression.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: coarse/fine Cartesian meshes, padded element patches and the
//!   local-to-global maps used to assemble patch matrices.
//! * [`randfield`]: Whittle-Matérn Gaussian fields sampled by circulant
//!   embedding, lognormal and hierarchical coefficients.
//! * [`fem`]: Q1 finite elements on the fine grid.
//! * [`lod`]: quasi-interpolation, element correctors, local surrogate
//!   matrices and the PG-LOD coarse solve.
//! * [`mlp`]: a small dense ReLU network with Adam, trained on the local
//!   surrogates.
//! * [`pipeline`]: dataset generation, training, NN-LOD assembly, evaluation
//!   and Monte Carlo studies.

pub mod config;
pub mod error;
pub mod fem;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod lod;
pub mod mlp;
pub mod pipeline;
pub mod randfield;

pub use error::{Error, Result};

#[cfg(test)]
mod testutil;
