//! Constrained predictive torque control for PM synchronous machines.
//!
//! The controller plans both current components over a continuous horizon as
//! degree-3 polynomials, minimizes a quadratic cost of torque error plus
//! weighted machine losses in closed form, and handles current and voltage
//! limits by transforming the constrained problem into a least-distance form
//! that a small simplex LP solves within a real-time budget. A fixed-step
//! plant simulator, a conventional field-oriented baseline, and a scenario
//! harness close the loop for benchmarking.

pub mod constraints;
pub mod controller;
pub mod cost;
pub mod error;
pub mod harness;
pub mod machine;
pub mod optimizer;
pub mod simplex;
pub mod trajectory;

pub use error::{Error, Result};
