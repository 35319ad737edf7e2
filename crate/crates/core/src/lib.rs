//! Cascaded modulating-filter simulation of open quantum systems driven by
//! nonclassical input fields.
//!
//! A system `G ~ (S, L, H)` driven by a Fock, multi-photon, coherent or cat
//! state field is simulated two ways:
//!
//! * directly, by integrating the hierarchy of generalized density matrices
//!   whose traces give the field matrix elements ([`hierarchy`]);
//! * as a cascade `G ◁ M` of an oscillator modulator `M` and the system,
//!   driven by vacuum, reduced by a partial trace over the modulator
//!   ([`cascade`]).
//!
//! The two routes must agree; [`cascade::replication_check`] runs both and
//! reports the deviation. [`scenario`] wraps everything in a declarative
//! JSON-driven runner used by the `modfilter` binary.

pub mod cascade;
pub mod config;
pub mod error;
pub mod grid;
pub mod hierarchy;
pub mod integrate;
mod kernels;
pub mod operators;
pub mod pulses;
pub mod scenario;
pub mod slh;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
