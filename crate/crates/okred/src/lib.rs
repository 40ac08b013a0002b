//! Critical points of the linearly perturbed Ohta-Kawasaki energy on the
//! flat 3-torus, constructed near translates of the Schwarz P surface.
//!
//! The crate builds a discrete Schwarz P base surface, assembles its Jacobi
//! operator, solves the constrained auxiliary problem for the normal-graph
//! correction at each translation offset, and maps the reduced energy over
//! the torus of offsets to locate and certify critical points.
//!
//! Entry points, bottom up:
//!
//! - [`field`]: periodic grids, spectral Poisson solves, nonlocal energy.
//! - [`forcing`]: trigonometric external forces.
//! - [`mesh`] / [`marching`]: periodic triangle meshes, Schwarz P extraction.
//! - [`geometry`]: normals, curvatures, area weights, normal-offset volume.
//! - [`jacobi`]: the Jacobi operator, its kernel, and the bordered solver.
//! - [`energy`]: energy breakdowns and first-variation residuals.
//! - [`reduction`]: the constrained fixed-point solve for the correction.
//! - [`landscape`]: reduced-energy scans and critical-point detection.
//! - [`config`] / [`pipeline`]: batch runs, exports, manifests.

pub mod config;
pub mod energy;
pub mod error;
pub mod field;
pub mod forcing;
pub mod geometry;
pub mod indicator;
pub mod jacobi;
pub mod landscape;
pub mod marching;
pub mod mesh;
pub mod pipeline;
pub mod reduction;
pub mod relax;
pub mod sparse;
pub mod tricubic;

pub use error::{Error, Result};
