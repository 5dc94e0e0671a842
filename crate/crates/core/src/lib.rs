//! Unrolled forward-backward splitting networks.
//!
//! The crate covers the `N`-layer network obtained by unrolling the
//! forward-backward splitting iteration with per-layer parameters, its
//! continuous-time limit as `N` grows, the associated learning problems, and
//! the numerical experiments that probe convergence in depth and stability
//! under data perturbation.
//!
//! - [`regularizers`]: convex regularizers and their proximal maps.
//! - [`dynamics`]: forward passes, the limit solver, and the projection /
//!   extension operators between layer parameters and controls.
//! - [`learning`]: objectives, adjoint gradients and the SGD trainer.
//! - [`experiments`]: dataset synthesis, depth sweeps, convergence and
//!   stability studies.
//! - [`io`]: binary parameter/dataset files, CSV tables and run manifests.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod learning;
pub mod linalg;
pub mod regularizers;

pub use error::{Error, Result};
pub use regularizers::{GrowthCase, Regularizer, RegularizerKind};
