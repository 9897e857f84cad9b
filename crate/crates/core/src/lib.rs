//! Highway driving-policy laboratory.
//!
//! A seedable three-lane freeway simulator, an occupancy-grid state codec,
//! the penalty-based reward, a double deep Q-network agent trained from
//! prioritized replay, a rule-based safety shield, and a finite-horizon
//! dynamic-programming planner used as the optimal benchmark. The
//! [`harness`] module ties these together into reproducible experiments.

pub mod action;
pub mod agent;
pub mod codec;
pub mod dp;
pub mod error;
pub mod harness;
pub mod nn;
pub mod per;
pub mod reward;
pub mod seed;
pub mod shield;
pub mod sim;

pub use action::{Action, ActionMask};
pub use error::{Error, Result};
