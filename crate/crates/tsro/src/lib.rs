//! Two-stage adaptive robust linear optimization.
//!
//! The library solves `min_x max_{u∈U} min_y a'x + b'y` over polyhedral
//! uncertainty with linear recourse, via column-and-constraint generation,
//! duality-driven Benders decomposition, and dual-basis-cut feasibility
//! oracles, plus an exact brute-force reference oracle and benchmark
//! instance generators.

pub mod adversary;
pub mod am;
pub mod backend;
pub mod config;
pub mod dbc;
pub mod driver;
pub mod error;
pub mod generators;
pub mod io;
pub mod linalg;
pub mod master;
pub mod model;
pub mod reference;

pub use config::{PartitionSign, SolverOptions, Tolerances};
pub use dbc::dbc_solve;
pub use driver::{ccg, ddbd, default_u0, CcgOracle, RunReport, Termination};
pub use error::{Error, Result};
pub use model::TwoStageInstance;
