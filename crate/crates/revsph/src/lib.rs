//! Symplectic, energy-preserving, globally time-reversible weakly
//! compressible SPH in two dimensions.
//!
//! The solver computes density in closed form from particle positions,
//! integrates with velocity Verlet, and can run its state vectors in Q31.32
//! fixed-point arithmetic, in which case a forward run followed by a velocity
//! reversal returns bit-exactly to the initial state.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod fixedpoint;
pub mod integrate;
pub mod isc;
pub mod kernel;
pub mod math;
pub mod neighbors;
pub mod sphcore;
pub mod thermo;

pub use error::SphError;
pub use math::Vec2;
