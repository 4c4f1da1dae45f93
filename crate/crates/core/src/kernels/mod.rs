//! Per-component subproblem solvers for the continuous blocks.
//!
//! Every kernel is pure: identical inputs give identical outputs, and the
//! engine dispatches them in parallel batches that write disjoint slots.

pub mod boxqp;
pub mod bus;
pub mod gen;
pub mod line;
pub mod oracle;
pub mod tron;
pub mod ucbar;
