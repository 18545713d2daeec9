//! Grid-distributed solver for the Lindblad quantum master equation.
//!
//! The density matrix is block-partitioned over a logical square processor
//! grid. The unitary half-step is propagated with Taylor-series propagators
//! composed from Cannon's distributed matrix multiply; the non-unitary
//! half-step exploits the sparsity of elementary jump operators `|j><i|` so
//! each dissipation channel costs one point transfer plus row/column sweeps
//! that touch only local data.
//!
//! Modules:
//! - [`tensor`]: dense complex matrices and block partitioning.
//! - [`subspace`]: reachable-state (dynamical subspace) construction.
//! - [`model`]: Tavis-Cummings Hamiltonian and dissipation channels.
//! - [`grid`]: logical processor grid, block messaging, timing.
//! - [`cannon`]: distributed multiply, propagator series, unitary step.
//! - [`dissipator`]: point/row/column channel updates.
//! - [`oracle`]: single-worker dense reference solver.
//! - [`sim`]: split-step driver, trajectories, reports, config.

pub mod cannon;
pub mod dissipator;
pub mod error;
pub mod grid;
pub mod model;
pub mod oracle;
pub mod sim;
pub mod subspace;
pub mod tensor;

pub use error::{Error, Result};
