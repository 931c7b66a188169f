//! Client selection and resource allocation for federated learning over a
//! shared wireless uplink.
//!
//! The crate is `no_std` and only needs an allocator. It covers the physical
//! cost model, label heterogeneity, a generalization-bound calculator, the
//! difference-of-convex selection optimizer, CPU frequency allocation,
//! comparison baselines and a small softmax-regression training loop.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod baselines;
pub mod csra;
pub mod decision;
pub mod error;
pub mod fl;
pub mod freq;
pub mod genbound;
pub mod heterogeneity;
mod math;
pub mod rng;
pub mod scenario;
pub mod wireless;

pub use decision::RoundDecision;
pub use error::{Constraint, Error, Result};
