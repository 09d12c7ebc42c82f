//! Numerical core for forward relative performance games with common noise.
//!
//! Agents invest in correlated assets driven by a shared Brownian motion `W⁰`
//! and private motions `Wⁱ`. Each agent's utility is a random field that
//! benchmarks its wealth against the population average: exponential (CARA)
//! against the arithmetic mean, power or log (CRRA) against the geometric mean.
//! The crate simulates the particle systems, computes closed-form equilibrium
//! strategies and correction processes, and tests the (super)martingale
//! property of the utilities along simulated paths.
//!
//! The crate is `no_std` and only needs `alloc`. Work that can run in parallel
//! goes through [`exec::Executor`]; the sequential executor is built in.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod coeffs;
pub mod equilibrium;
pub mod error;
pub mod exec;
pub mod game;
pub mod math;
pub mod meanfield;
pub mod measure_calc;
pub mod particles;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
