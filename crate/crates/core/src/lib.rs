//! Newton-Raphson AC power flow over an extended set of bus types (PQ, PV,
//! Vtheta, P, PQV), with bus-type switching that trades a generator's
//! voltage setpoint for a pinned voltage at a violated load bus.
//!
//! The crate is organised bottom-up:
//!
//! - [`case_io`]: MATPOWER case parsing and report output.
//! - [`network`]: per-unit admittance matrix, topology and bus types.
//! - [`sparse`]: sparse matrices and the direct LU used by the solver.
//! - [`solver`]: power-balance equations, Jacobian and Newton iteration.
//! - [`switching`]: violation checks, Q-limit and P/PQV switching, and the
//!   outer loop that ties them together.
//! - [`experiments`]: Monte-Carlo load scenarios and batch statistics.

pub mod case_io;
pub mod experiments;
pub mod network;
pub mod solver;
pub mod sparse;
pub mod switching;

pub use case_io::{parse_matpower_case, read_matpower_case, CaseError, NetworkCase};
pub use network::{BusType, BusTypeAssignment, Network, NetworkError};
pub use solver::{PowerFlowState, SolveOptions, SolveOutcome, SolveStatus};
pub use switching::{
    run_with_switching, SwitchVariant, SwitchingOptions, SwitchingResult, ViolationReport,
};
