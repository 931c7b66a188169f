//! Shared helpers for the integration tests: seeded instances and
//! independent reference computations.

#![allow(dead_code)]

pub mod instances;
pub mod oracles;
