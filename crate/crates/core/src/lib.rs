//! Alternating gradient method for bilevel problems whose lower level
//! satisfies the Polyak–Łojasiewicz condition.
//!
//! The crate is `no_std` (it needs `alloc`). It contains the problem
//! interface ([`oracle`]), benchmark problems with analytic derivatives
//! ([`problems`]), the solver ([`solver`]), stationarity metrics
//! ([`metrics`]), brute-force verification oracles ([`verify`]) and the
//! small dense linear algebra they share ([`linalg`]).

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod problems;
pub mod rng;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use metrics::{RateFit, ResidualTriple};
pub use oracle::{BilevelOracle, ProblemConstants};
pub use solver::{GaletConfig, GaletRun, Iterate, RunOptions, SolverError, TraceRecord, WVariant};
