use serde::{Deserialize, Serialize};

use super::vehicle::VehicleId;
use super::world::WorldState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub t: u64,
    /// The policy-controlled vehicle involved.
    pub vehicle: VehicleId,
    pub other: VehicleId,
    /// Bumper-to-bumper gap at detection; negative for physical overlap.
    pub gap: f64,
    pub other_is_leader: bool,
    /// Physical overlap, not just a breach of the safe distance.
    pub severe: bool,
    /// Attributed to the controlled vehicle: it closed on its leader, or it
    /// changed lanes into the conflict during this step.
    pub ego_caused: bool,
}

/// Collisions involving controlled vehicles: a same-lane vehicle within
/// `threshold` metres bumper-to-bumper, or overlapping.
pub fn detect_collisions(world: &WorldState, threshold: f64) -> Vec<CollisionEvent> {
    let mut events = Vec::new();
    for me in world.vehicles.iter().filter(|v| v.controlled) {
        let me_changed = me.last_lane_change == Some(world.t);
        for other in world.vehicles.iter().filter(|o| o.id != me.id && o.lane == me.lane) {
            let gap = me.gap_to(other);
            if gap > threshold {
                continue;
            }
            let other_is_leader = other.x >= me.x;
            // Vehicles can pass through each other within one step, so the
            // order at the start of the step decides who closed in.
            let was_leader = match (world.previous_x(me.id), world.previous_x(other.id)) {
                (Some(mine), Some(theirs)) => theirs >= mine,
                _ => other_is_leader,
            };
            let other_cut_in = other.last_lane_change == Some(world.t) && !me_changed;
            let ego_caused = if was_leader { !other_cut_in } else { me_changed };
            events.push(CollisionEvent {
                t: world.t,
                vehicle: me.id,
                other: other.id,
                gap,
                other_is_leader,
                severe: gap < 0.0,
                ego_caused,
            });
        }
    }
    events
}
