//! Structure-preserving learning of Hamiltonian flow maps.
//!
//! The crate builds symplectic networks from exactly-integrated polynomial
//! shear layers, trains them on snapshot pairs, and recovers symbolic
//! modified Hamiltonians through truncated BCH backward error analysis.

pub mod bch;
pub mod error;
pub mod integrate;
pub mod layers;
pub mod linrep;
pub mod matfun;
pub mod model;
pub mod phase;
pub mod poly;
pub mod regression;
pub mod testutil;
pub mod train;
pub mod zoo;

pub use error::{Result, StrupError};
