//! Unit commitment with full AC optimal power flow, solved by a two-level
//! consensus ADMM.
//!
//! The solver splits the mixed-integer nonconvex problem into blocks that are
//! cheap to optimize in isolation:
//!
//! - the binary commitment block decomposes into one dynamic program per
//!   generator ([`ucdp`]),
//! - the continuous block decomposes into tiny per-component subproblems
//!   (generator, transmission line, bus) solved by dense trust-region Newton
//!   and closed-form kernels ([`kernels`]),
//! - an outer augmented-Lagrangian loop drives an artificial slack on every
//!   coupling constraint to zero while the inner loop runs Gauss-Seidel ADMM
//!   sweeps over the blocks ([`engine`]).
//!
//! Network data comes from MATPOWER case files ([`grid`]); the time dimension
//! (demand trajectory, commitment parameters, initial conditions) is added by
//! [`scenario`]; the exact consensus constraint layout lives in
//! [`formulation`].

pub mod engine;
pub mod error;
pub mod formulation;
pub mod grid;
pub mod kernels;
pub mod scenario;
pub mod ucdp;

pub use error::{Error, Result};
pub use grid::{parse_matpower, GridCase};
pub use scenario::{build_problem, default_profile, DemandProfile, ScheduleProblem, UcParams};
