//! Packing smooth families of surfaces into Lebesgue-null sets with a single
//! universal parameter function `psi`.
//!
//! The crate is organised bottom-up:
//!
//! - [`numeric`]: exact rationals, log-scale and level-index magnitudes.
//! - [`factorial`]: factorial-base expansions of points of `(0, 1]^p`.
//! - [`dense`]: the dense map families, their big-integer indices and the sequence `(r_n)`.
//! - [`psi`]: exact truncations of `psi` with certified tail radii.
//! - [`family`]: surface families with Jacobians, bounds and the built-in demos.
//! - [`slice`]: level selection, the five-term decomposition and covering certificates.
//! - [`measure`]: seeded cell-counting estimates of slice and union measure.

pub mod dense;
pub mod error;
pub mod exec;
pub mod factorial;
pub mod family;
pub mod measure;
pub mod numeric;
pub mod psi;
pub mod slice;

pub use error::{Error, Result};
pub use exec::Exec;
pub use factorial::FactorialDigits;
