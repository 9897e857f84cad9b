//! Finite-horizon dynamic-programming planner against predictable traffic.
//!
//! Manual vehicles move at constant speed, so their whole future is known
//! once the scenario is fixed. The ego state is (lane, integer speed,
//! position on a 0.5 m grid); with `dt = 1` every action maps grid states
//! to grid states exactly. Stage costs are the negated reward, evaluated
//! the same way the simulator evaluates it.

mod grid;
mod oracle;
mod problem;

pub use grid::{extract_trajectory, solve, DpGrid, PlannedTrajectory, ValueTable};
pub use oracle::{brute_force_oracle, sequence_cost, ORACLE_MAX_HORIZON};
pub use problem::{rollout_obstacles, DpProblem, EgoGridState, ObstacleState};
