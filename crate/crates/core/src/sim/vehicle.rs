use serde::{Deserialize, Serialize};

pub type VehicleId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VehicleKind {
    ManualSlow,
    ManualFast,
    Truck,
    Bus,
    Motorcycle,
    Ego,
}

impl VehicleKind {
    /// Length in metres used for occupancy and overlap checks.
    pub fn default_length(self) -> f64 {
        match self {
            VehicleKind::Truck | VehicleKind::Bus => 12.0,
            VehicleKind::Motorcycle => 2.0,
            VehicleKind::ManualSlow | VehicleKind::ManualFast | VehicleKind::Ego => 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    pub lane: usize,
    /// Rear-bumper longitudinal position (m).
    pub x: f64,
    pub v: f64,
    pub length: f64,
    pub desired_v: f64,
    pub kind: VehicleKind,
    /// Driven by a policy rather than by the traffic model.
    pub controlled: bool,
    /// Step index at which the most recent lane change completed.
    pub last_lane_change: Option<u64>,
}

impl Vehicle {
    pub fn front(&self) -> f64 {
        self.x + self.length
    }

    /// Bumper-to-bumper distance to `other`, signed so that overlap is negative.
    pub fn gap_to(&self, other: &Vehicle) -> f64 {
        if other.x >= self.x {
            other.x - self.front()
        } else {
            self.x - other.front()
        }
    }
}
