//! Slow, independent reference computations for the clusterbo test suites.
//!
//! Nothing here shares code with the library under test. Each module favours
//! the most direct formulation over speed: exact rationals, extended
//! precision, brute force and Monte Carlo.

pub mod dd;
pub mod ei;
pub mod flops;
pub mod gp;
pub mod sobol;
pub mod synthetic;
pub mod ward;
