use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::vehicle::VehicleId;
use super::world::WorldState;
use super::ROAD_LANES;

/// Sensing range behind the ego's rear bumper (m).
pub const RANGE_BEHIND: f64 = 60.0;
/// Sensing range ahead of the ego's rear bumper (m).
pub const RANGE_AHEAD: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoSnapshot {
    pub id: VehicleId,
    pub lane: usize,
    pub x: f64,
    pub v: f64,
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: VehicleId,
    /// Rear-bumper position relative to the ego's rear bumper (m).
    pub rel_x: f64,
    pub lane: usize,
    /// Speed estimate, once one is available.
    pub speed: Option<f64>,
    pub length: f64,
}

/// Where a neighbour sits longitudinally with respect to the ego.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Ahead,
    Behind,
    Abreast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensedEnvironment {
    pub ego: EgoSnapshot,
    pub neighbors: Vec<Neighbor>,
    pub offroad_left: bool,
    pub offroad_right: bool,
}

impl SensedEnvironment {
    pub fn relation(&self, n: &Neighbor) -> Relation {
        if n.rel_x >= self.ego.length {
            Relation::Ahead
        } else if n.rel_x + n.length <= 0.0 {
            Relation::Behind
        } else {
            Relation::Abreast
        }
    }

    /// Bumper-to-bumper distance; negative when the vehicles overlap.
    pub fn gap(&self, n: &Neighbor) -> f64 {
        if n.rel_x >= 0.0 {
            n.rel_x - self.ego.length
        } else {
            -n.rel_x - n.length
        }
    }

    /// Estimated neighbour speed, falling back to the ego's own speed.
    pub fn speed_of(&self, n: &Neighbor) -> f64 {
        n.speed.unwrap_or(self.ego.v)
    }

    pub fn in_lane(&self, lane: usize) -> impl Iterator<Item = &Neighbor> {
        self.neighbors.iter().filter(move |n| n.lane == lane)
    }

    /// Nearest vehicle fully ahead in `lane`.
    pub fn leader_in(&self, lane: usize) -> Option<&Neighbor> {
        self.in_lane(lane)
            .filter(|n| self.relation(n) == Relation::Ahead)
            .min_by(|a, b| a.rel_x.total_cmp(&b.rel_x))
    }

    /// Nearest vehicle fully behind in `lane`.
    pub fn follower_in(&self, lane: usize) -> Option<&Neighbor> {
        self.in_lane(lane)
            .filter(|n| self.relation(n) == Relation::Behind)
            .max_by(|a, b| a.rel_x.total_cmp(&b.rel_x))
    }

    pub fn abreast_in(&self, lane: usize) -> bool {
        self.in_lane(lane).any(|n| self.relation(n) == Relation::Abreast)
    }

    /// Lane reached by a lateral offset, if it is on the road.
    pub fn lane_offset(&self, delta: i32) -> Option<usize> {
        let lane = self.ego.lane as i64 + delta as i64;
        (0..ROAD_LANES as i64).contains(&lane).then_some(lane as usize)
    }
}

/// Observes the surroundings of `ego_id`: vehicles whose rear bumper lies
/// within [-60, 100] m of the ego's rear bumper, in the ego's lane and the
/// adjacent lanes. With `noise_pct = p > 0` each relative position is
/// multiplied by `1 + e`, `e ~ U[-p, p]`, then clamped to the window.
pub fn sense<R: Rng + ?Sized>(
    world: &WorldState,
    ego_id: VehicleId,
    noise_pct: f64,
    rng: &mut R,
) -> Result<SensedEnvironment> {
    let ego = world.vehicle(ego_id).ok_or(Error::UnknownVehicle(ego_id))?;
    let mut neighbors = Vec::new();
    for other in &world.vehicles {
        if other.id == ego_id || other.lane.abs_diff(ego.lane) > 1 {
            continue;
        }
        let rel = other.x - ego.x;
        if !(-RANGE_BEHIND..=RANGE_AHEAD).contains(&rel) {
            continue;
        }
        let measured = if noise_pct > 0.0 {
            let e = rng.gen_range(-noise_pct..=noise_pct);
            (rel * (1.0 + e)).clamp(-RANGE_BEHIND, RANGE_AHEAD)
        } else {
            rel
        };
        neighbors.push(Neighbor { id: other.id, rel_x: measured, lane: other.lane, speed: None, length: other.length });
    }
    Ok(SensedEnvironment {
        ego: EgoSnapshot { id: ego.id, lane: ego.lane, x: ego.x, v: ego.v, length: ego.length },
        neighbors,
        offroad_left: ego.lane == 0,
        offroad_right: ego.lane + 1 == ROAD_LANES,
    })
}

/// Noise-free observation.
pub fn sense_exact(world: &WorldState, ego_id: VehicleId) -> Result<SensedEnvironment> {
    sense(world, ego_id, 0.0, &mut rand::rngs::mock::StepRng::new(0, 0))
}

/// Speed estimates for the neighbours in `cur` from two consecutive
/// position fixes. Relative displacements are converted to absolute ones
/// with the ego's own (exact) displacement. Neighbours not seen in `prev`
/// keep whatever speed `cur` already carries, usually none.
pub fn estimate_velocities(prev: Option<&SensedEnvironment>, cur: &SensedEnvironment, dt: f64) -> Vec<Option<f64>> {
    let ego_shift = prev.map(|p| cur.ego.x - p.ego.x);
    cur.neighbors
        .iter()
        .map(|n| {
            let previous = prev.and_then(|p| p.neighbors.iter().find(|m| m.id == n.id));
            match (previous, ego_shift) {
                (Some(m), Some(shift)) => Some((n.rel_x - m.rel_x + shift) / dt),
                _ => n.speed,
            }
        })
        .collect()
}

/// `cur` with every neighbour's speed field set by [`estimate_velocities`].
pub fn with_estimated_speeds(prev: Option<&SensedEnvironment>, mut cur: SensedEnvironment, dt: f64) -> SensedEnvironment {
    let speeds = estimate_velocities(prev, &cur, dt);
    for (n, s) in cur.neighbors.iter_mut().zip(speeds) {
        n.speed = s;
    }
    cur
}
