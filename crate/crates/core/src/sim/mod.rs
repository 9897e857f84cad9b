//! Microscopic simulation of a straight three-lane freeway.

mod collision;
mod config;
mod sensing;
mod vehicle;
mod world;

pub use collision::{detect_collisions, CollisionEvent};
pub use config::{apply_weather, mixed_types, passenger_mix, slow_fast_mix, KindSpec, SimConfig, TrafficMode, WeatherScale};
pub use sensing::{
    estimate_velocities, sense, sense_exact, with_estimated_speeds, EgoSnapshot, Neighbor, Relation,
    SensedEnvironment, RANGE_AHEAD, RANGE_BEHIND,
};
pub use vehicle::{Vehicle, VehicleId, VehicleKind};
pub use world::{generate_mixed_scenario, generate_scenario, safe_speed, Entry, SimEvent, WorldState};

/// Lanes on the road; lane 0 is the leftmost.
pub const ROAD_LANES: usize = 3;
