//! Numerical laboratory for small-cap decoupling on the paraboloid.
//!
//! Frequency-side geometry lives in [`caps`], test functions and their
//! norms in [`signal`] and [`quadrature`], the decoupling measurements in
//! [`decoupling`], wave packets and their censuses in [`packets`], and the
//! tube incidence machinery (kernel ladders, counting and volume checks)
//! in [`incidence`].

// `!(x >= lo)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod caps;
pub mod corollary;
pub mod decoupling;
mod error;
pub mod incidence;
pub mod packets;
pub mod quadrature;
pub mod regression;
pub mod rng;
pub mod signal;
pub mod sum;
pub mod tubes;

pub use caps::{AlphaVector, Cap, CapFamily, CapKind, Scale, Slab};
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use quadrature::{QuadratureMode, QuadratureSpec, Region, WeightProfile};
pub use signal::{AtomicSignal, Family, FrequencyAtom};
