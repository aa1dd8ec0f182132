//! Simulation and analysis toolkit for a tunable-coupling superconducting
//! qubit dispersively coupled to a readout cavity.
//!
//! Units: configuration in MHz (ordinary frequency) and μs; Hamiltonians and
//! rates consumed by the dynamics are angular (rad/μs).

pub mod analysis;
pub mod device;
pub mod dynamics;
pub mod experiments;
pub mod fockspace;

pub use device::TcqParams;
pub use fockspace::{DimensionLayout, Mode, Operator, QuantumState};
