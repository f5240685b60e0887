//! Numerical laboratory for the parabolic obstacle problem
//! `Δu − u_t = f·χ{u>0}`, `u ≥ 0` on backward cylinders.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: uniform space-time grids, fields, interpolation, cylinder quadrature
//!   and parabolic rescaling.
//! - [`heatsolve`]: the discrete heat operator, an implicit heat solver and
//!   manufactured `(u, f)` pairs.
//! - [`obstacle`]: time-implicit projected SOR for the per-step complementarity problem.
//! - [`regularity`]: pointwise oscillation moduli, constrained quadratic fits,
//!   half-space fits and Dini integrals.
//! - [`verify`]: empirical checks of growth, non-degeneracy, decay and Taylor estimates.
//! - [`freeboundary`]: interface extraction, regular-point classification and the
//!   graph diagnostic.
//! - [`io`]: the binary field format and CSV curve files.

pub mod error;
pub mod freeboundary;
pub mod grid;
pub mod heatsolve;
pub mod io;
pub mod ladder;
pub mod obstacle;
mod par;
pub mod regularity;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{Cylinder, Grid, GridSpec, ScalarField, SpaceTimePoint};
pub use heatsolve::Poly2;
pub use ladder::Ladder;
