//! Simulation and analysis toolkit for superradiant cavity metrology.
//!
//! The crate models N two-level atoms symmetrically coupled to a single leaky
//! cavity mode (Tavis-Cummings with cavity decay and optional spontaneous
//! emission), integrates the Lindblad master equation with physicality
//! monitoring, derives photon-counting statistics of the leaked field, and
//! propagates them into parameter-estimation uncertainties so that the
//! Heisenberg-limit vs standard-quantum-limit scaling question can be tested
//! numerically.
//!
//! Module map:
//! - [`hilbert`]: Hilbert spaces (collective spin ladder, truncated Fock,
//!   full 2^N oracle, composites), sparse operators, density matrices.
//! - [`dynamics`]: Lindblad model assembly and time integration.
//! - [`superradiance`]: adiabatic elimination of the cavity, regime checks,
//!   counting statistics of the leaked photons.
//! - [`estimation`]: error propagation, closed-form uncertainty limits,
//!   scaling sweeps and power-law fits.
//! - [`coupling`]: cavity geometry, the coupling constant, and the
//!   length-change parameter binding.
//!
//! Default units are natural: hbar = 1, rates and times are dimensionless
//! multiples of the coupling scale. SI quantities enter only through
//! [`coupling`], which emits an explicit conversion record.

pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod hilbert;
pub mod integrate;
pub mod linalg;
pub mod superradiance;

pub use error::{Error, Result};
