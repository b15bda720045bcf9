//! Central and balanced configurations of the Newtonian n-body problem.
//!
//! The crate evaluates the potential and its derivatives, analyses the
//! Hessian spectrum along trivial (planar or collinear) branches, predicts
//! bifurcation instants through the spectral flow of the symmetry-reduced
//! Hessian, and traces the bifurcating branches by pseudo-arclength
//! continuation.

pub mod continuation;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod parallel;
pub mod potential;
pub mod presets;
pub mod record;
pub mod runner;
pub mod scenario;
pub mod spectrum;
pub mod svg;

pub use error::{Error, Result};
pub use linalg::InertiaTriple;
pub use parallel::Execution;
pub use potential::{Configuration, Masses, SParameter};
