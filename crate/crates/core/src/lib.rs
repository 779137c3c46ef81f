//! Berry-phase estimation from adiabatic loops.
//!
//! A closed loop of Hamiltonians `H(s)` is evolved forwards and backwards at runtime `T`.
//! Combining the two ground-state eigenphases cancels the dynamical phase and the `1/T`
//! adiabatic error; Richardson extrapolation over runtimes removes the non-oscillatory
//! `1/T^2` term, and randomizing the runtime averages the oscillatory remainder away.

pub mod apt;
pub mod error;
pub mod estimators;
pub mod hamiltonians;
pub mod harness;
pub mod linalg;
pub mod measure;
pub mod numerics;
pub mod propagate;
pub mod randomize;
pub mod response;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
