//! Facility location with connectivity, capacity, and penalty constraints.
//!
//! The toolkit solves constrained facility-location variants by splitting an
//! instance into sub-problems (drop capacities, drop connectivity), solving
//! each with a black-box sub-solver, and combining the results into one
//! feasible solution whose cost is certified against the inputs:
//! `Cost(combined) <= Cost(connected side) + 2 * Cost(capacitated side)`.
//!
//! Modules mirror the pipeline: [`instance`] defines instances and views,
//! [`graphalg`] and [`lp`] supply the flow/LP machinery, [`subsolvers`] holds
//! the black boxes and exact oracles, [`reductions`] the penalty reductions,
//! [`combine`] the merging step, [`verify`] the auditors, and [`cli`] the
//! command-line driver.

pub mod cli;
pub mod combine;
pub mod error;
pub mod graphalg;
pub mod instance;
pub mod lp;
pub mod reductions;
pub mod subsolvers;
pub mod verify;

pub use error::{Error, Result};
pub use instance::{Instance, ProblemKind};
pub use subsolvers::Solution;
