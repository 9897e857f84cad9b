use std::fmt;

use serde::{Deserialize, Serialize};

/// The seven high-level manoeuvres available to a controlled vehicle.
/// Each is a goal held for one decision interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    ChangeLeft,
    ChangeRight,
    Accel1,
    Accel2,
    Decel1,
    Decel2,
    Keep,
}

impl Action {
    pub const COUNT: usize = 7;

    pub const ALL: [Action; Action::COUNT] = [
        Action::ChangeLeft,
        Action::ChangeRight,
        Action::Accel1,
        Action::Accel2,
        Action::Decel1,
        Action::Decel2,
        Action::Keep,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    /// Longitudinal acceleration in m/s². Lane changes hold speed.
    pub fn acceleration(self) -> f64 {
        match self {
            Action::Accel1 => 1.0,
            Action::Accel2 => 2.0,
            Action::Decel1 => -1.0,
            Action::Decel2 => -2.0,
            Action::ChangeLeft | Action::ChangeRight | Action::Keep => 0.0,
        }
    }

    /// Lane index offset; lane 0 is the leftmost lane.
    pub fn lane_delta(self) -> i32 {
        match self {
            Action::ChangeLeft => -1,
            Action::ChangeRight => 1,
            _ => 0,
        }
    }

    pub fn is_lane_change(self) -> bool {
        self.lane_delta() != 0
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Action::ChangeLeft => "change_left",
            Action::ChangeRight => "change_right",
            Action::Accel1 => "accel1",
            Action::Accel2 => "accel2",
            Action::Decel1 => "decel1",
            Action::Decel2 => "decel2",
            Action::Keep => "keep",
        };
        f.write_str(name)
    }
}

/// Set of permitted actions, one bit per [`Action`] index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionMask(u8);

impl ActionMask {
    pub const fn all() -> Self {
        ActionMask(0b111_1111)
    }

    pub const fn empty() -> Self {
        ActionMask(0)
    }

    pub fn from_bits(bits: u8) -> Self {
        ActionMask(bits & 0b111_1111)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, action: Action) -> bool {
        self.0 & (1 << action.index()) != 0
    }

    pub fn insert(&mut self, action: Action) {
        self.0 |= 1 << action.index();
    }

    pub fn remove(&mut self, action: Action) {
        self.0 &= !(1 << action.index());
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |a| self.contains(*a))
    }
}

impl Default for ActionMask {
    fn default() -> Self {
        ActionMask::all()
    }
}
