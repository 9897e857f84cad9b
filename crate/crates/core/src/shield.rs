//! Evaluation-time safety rules.
//!
//! Two collision types can be caused on a highway: closing on a slower
//! leader inside the minimum safety time gap, and changing lanes in front
//! of a faster follower or too close to the new leader. The shield vetoes
//! or overrides the proposed action using only what the ego senses.
//!
//! Both rules are evaluated on the current state and, because decisions
//! are held for a whole interval, also on the state predicted one interval
//! ahead with the leader at its estimated speed. A bumper-gap floor
//! (`min_gap`) covers the equal-speed case where the time-gap constraint is
//! vacuous.

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::sim::SensedEnvironment;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetyConfig {
    /// Maximum feasible ego deceleration (m/s²).
    pub d_max: f64,
    /// Bumper gap that a permitted action may never bring the ego inside (m).
    pub min_gap: f64,
    /// Gap at or below which a shielded run counts a collision (m).
    pub collision_gap: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig { d_max: 2.0, min_gap: 4.0, collision_gap: 2.0 }
    }
}

/// Gap and speed of the nearest vehicle in some direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborGap {
    pub gap: f64,
    pub speed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShieldReason {
    LeaderTimeGap,
    LaneUnavailable,
    TargetLeader,
    TargetFollower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShieldDecision {
    pub action: Action,
    pub overridden: bool,
    pub reason: Option<ShieldReason>,
}

impl ShieldDecision {
    fn pass(action: Action) -> Self {
        ShieldDecision { action, overridden: false, reason: None }
    }
}

/// Smallest time gap to a slower leader that still allows matching its
/// speed under maximum deceleration: `2 (v_e - v_l) / d_max`, zero when the
/// ego is not faster.
pub fn min_time_gap(v_ego: f64, v_leader: f64, d_max: f64) -> f64 {
    if v_ego > v_leader {
        2.0 * (v_ego - v_leader) / d_max
    } else {
        0.0
    }
}

/// Bumper gap divided by ego speed; infinite at standstill.
pub fn time_gap(gap: f64, v_ego: f64) -> f64 {
    if v_ego > 0.0 {
        gap / v_ego
    } else {
        f64::INFINITY
    }
}

fn violates_time_gap(gap: f64, v_ego: f64, v_leader: f64, d_max: f64) -> bool {
    v_ego > v_leader && time_gap(gap, v_ego) <= min_time_gap(v_ego, v_leader, d_max)
}

/// Whether holding `accel` for one interval behind `leader` breaks a rule.
pub fn longitudinal_violation(v_ego: f64, accel: f64, leader: Option<NeighborGap>, cfg: &SafetyConfig, dt: f64) -> bool {
    let Some(l) = leader else {
        return false;
    };
    if violates_time_gap(l.gap, v_ego, l.speed, cfg.d_max) {
        return true;
    }
    let v_next = (v_ego + accel * dt).max(0.0);
    let gap_next = l.gap + l.speed * dt - 0.5 * (v_ego + v_next) * dt;
    gap_next <= cfg.min_gap || violates_time_gap(gap_next, v_next, l.speed, cfg.d_max)
}

/// Lane-change rule: the new leader must sit outside the minimum safety
/// time gap, the new follower must not be faster than the ego, and neither
/// gap may fall to `min_gap` during the interval.
pub fn lane_change_is_safe(
    v_ego: f64,
    leader: Option<NeighborGap>,
    follower: Option<NeighborGap>,
    cfg: &SafetyConfig,
    dt: f64,
) -> bool {
    if let Some(l) = leader {
        let gap_next = l.gap + (l.speed - v_ego) * dt;
        if violates_time_gap(l.gap, v_ego, l.speed, cfg.d_max)
            || l.gap.min(gap_next) <= cfg.min_gap
            || violates_time_gap(gap_next, v_ego, l.speed, cfg.d_max)
        {
            return false;
        }
    }
    if let Some(f) = follower {
        let gap_next = f.gap + (v_ego - f.speed) * dt;
        if f.speed > v_ego || f.gap.min(gap_next) <= cfg.min_gap {
            return false;
        }
    }
    true
}

fn leader_gap(sensed: &SensedEnvironment, lane: usize) -> Option<NeighborGap> {
    sensed.leader_in(lane).map(|n| NeighborGap { gap: sensed.gap(n), speed: sensed.speed_of(n) })
}

fn follower_gap(sensed: &SensedEnvironment, lane: usize) -> Option<NeighborGap> {
    sensed.follower_in(lane).map(|n| NeighborGap { gap: sensed.gap(n), speed: sensed.speed_of(n) })
}

/// Longitudinal rule for a non-lane-change action: override with the
/// strongest deceleration when the time gap to the leader is violated.
pub fn check_longitudinal(sensed: &SensedEnvironment, action: Action, cfg: &SafetyConfig, dt: f64) -> ShieldDecision {
    debug_assert!(!action.is_lane_change());
    let leader = leader_gap(sensed, sensed.ego.lane);
    if longitudinal_violation(sensed.ego.v, action.acceleration(), leader, cfg, dt) {
        ShieldDecision { action: Action::Decel2, overridden: true, reason: Some(ShieldReason::LeaderTimeGap) }
    } else {
        ShieldDecision::pass(action)
    }
}

/// Lane-change rule. A vetoed change falls back to `Keep`, which then goes
/// through the longitudinal rule.
pub fn check_lane_change(sensed: &SensedEnvironment, action: Action, cfg: &SafetyConfig, dt: f64) -> ShieldDecision {
    debug_assert!(action.is_lane_change());
    let veto = |reason| {
        let d = check_longitudinal(sensed, Action::Keep, cfg, dt);
        ShieldDecision { action: d.action, overridden: true, reason: Some(d.reason.unwrap_or(reason)) }
    };
    let Some(target) = sensed.lane_offset(action.lane_delta()) else {
        return veto(ShieldReason::LaneUnavailable);
    };
    if sensed.abreast_in(target) {
        return veto(ShieldReason::LaneUnavailable);
    }
    // A vehicle seen for the first time has no speed estimate yet.
    if sensed.leader_in(target).is_some_and(|n| n.speed.is_none()) {
        return veto(ShieldReason::TargetLeader);
    }
    if sensed.follower_in(target).is_some_and(|n| n.speed.is_none()) {
        return veto(ShieldReason::TargetFollower);
    }
    let leader = leader_gap(sensed, target);
    let follower = follower_gap(sensed, target);
    if lane_change_is_safe(sensed.ego.v, leader, None, cfg, dt) {
        if lane_change_is_safe(sensed.ego.v, None, follower, cfg, dt) {
            ShieldDecision::pass(action)
        } else {
            veto(ShieldReason::TargetFollower)
        }
    } else {
        veto(ShieldReason::TargetLeader)
    }
}

pub fn shield(sensed: &SensedEnvironment, action: Action, cfg: &SafetyConfig, dt: f64) -> ShieldDecision {
    if action.is_lane_change() {
        check_lane_change(sensed, action, cfg, dt)
    } else {
        check_longitudinal(sensed, action, cfg, dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{EgoSnapshot, Neighbor};

    fn scene(lane: usize, v: f64, others: &[(usize, f64, f64)]) -> SensedEnvironment {
        SensedEnvironment {
            ego: EgoSnapshot { id: 1, lane, x: 0.0, v, length: 5.0 },
            neighbors: others
                .iter()
                .enumerate()
                .map(|(i, &(lane, rel_x, speed))| Neighbor { id: i as u32 + 2, rel_x, lane, speed: Some(speed), length: 5.0 })
                .collect(),
            offroad_left: lane == 0,
            offroad_right: lane == 2,
        }
    }

    #[test]
    fn min_time_gap_values() {
        assert_eq!(min_time_gap(21.0, 16.0, 2.0), 5.0);
        assert_eq!(min_time_gap(16.0, 16.0, 2.0), 0.0);
        assert_eq!(min_time_gap(10.0, 16.0, 2.0), 0.0);
        assert_eq!(min_time_gap(21.0, 16.0, 4.0), 2.5);
    }

    #[test]
    fn longitudinal_cases() {
        let cfg = SafetyConfig::default();
        let empty = scene(1, 21.0, &[]);
        assert_eq!(check_longitudinal(&empty, Action::Accel2, &cfg, 1.0).action, Action::Accel2);

        // gap 80 m: time gap 3.81 s < 5 s
        let close = scene(1, 21.0, &[(1, 85.0, 16.0)]);
        let d = check_longitudinal(&close, Action::Keep, &cfg, 1.0);
        assert_eq!(d.action, Action::Decel2);
        assert!(d.overridden);

        let equal = scene(1, 16.0, &[(1, 5.0 + 10.5, 16.0)]);
        assert_eq!(check_longitudinal(&equal, Action::Keep, &cfg, 1.0).action, Action::Keep);
    }

    #[test]
    fn predicted_closing_is_caught() {
        let cfg = SafetyConfig::default();
        // Equal speed, 5 m gap: holding is fine, accelerating is not.
        let s = scene(1, 16.0, &[(1, 10.0, 16.0)]);
        assert_eq!(check_longitudinal(&s, Action::Keep, &cfg, 1.0).action, Action::Keep);
        assert_eq!(check_longitudinal(&s, Action::Accel2, &cfg, 1.0).action, Action::Decel2);
    }

    #[test]
    fn lane_change_cases() {
        let cfg = SafetyConfig::default();
        let empty = scene(1, 21.0, &[]);
        assert_eq!(check_lane_change(&empty, Action::ChangeLeft, &cfg, 1.0).action, Action::ChangeLeft);

        let fast_follower = scene(1, 21.0, &[(0, -40.0, 25.0)]);
        let d = check_lane_change(&fast_follower, Action::ChangeLeft, &cfg, 1.0);
        assert_eq!(d.action, Action::Keep);
        assert_eq!(d.reason, Some(ShieldReason::TargetFollower));

        // Leader 120 m ahead at 16 m/s: 120 / 21 = 5.71 s > 5 s.
        let ok = scene(1, 21.0, &[(0, 125.0, 16.0), (0, -30.0, 15.0)]);
        assert_eq!(check_lane_change(&ok, Action::ChangeLeft, &cfg, 1.0).action, Action::ChangeLeft);

        let near = scene(1, 21.0, &[(0, 60.0, 16.0)]);
        assert_eq!(check_lane_change(&near, Action::ChangeLeft, &cfg, 1.0).reason, Some(ShieldReason::TargetLeader));

        let edge = scene(0, 21.0, &[]);
        let d = check_lane_change(&edge, Action::ChangeLeft, &cfg, 1.0);
        assert_eq!((d.action, d.reason), (Action::Keep, Some(ShieldReason::LaneUnavailable)));
    }

    #[test]
    fn unknown_target_speed_vetoes_change() {
        let cfg = SafetyConfig::default();
        let mut s = scene(1, 10.0, &[(2, -30.0, 8.0)]);
        assert_eq!(check_lane_change(&s, Action::ChangeRight, &cfg, 1.0).action, Action::ChangeRight);
        s.neighbors[0].speed = None;
        let d = check_lane_change(&s, Action::ChangeRight, &cfg, 1.0);
        assert_eq!((d.action, d.reason), (Action::Keep, Some(ShieldReason::TargetFollower)));
    }

    #[test]
    fn vetoed_change_still_checks_leader() {
        let cfg = SafetyConfig::default();
        let s = scene(1, 21.0, &[(1, 45.0, 16.0), (0, -20.0, 25.0)]);
        let d = shield(&s, Action::ChangeLeft, &cfg, 1.0);
        assert_eq!(d.action, Action::Decel2);
        assert!(d.overridden);
    }

    #[test]
    fn idempotent() {
        let cfg = SafetyConfig::default();
        let scenes = [
            scene(1, 21.0, &[(1, 45.0, 16.0), (0, -20.0, 25.0)]),
            scene(0, 18.0, &[(1, 2.0, 18.0)]),
            scene(2, 12.0, &[(2, 30.0, 14.0), (1, -8.0, 10.0)]),
        ];
        for s in &scenes {
            for a in Action::ALL {
                let once = shield(s, a, &cfg, 1.0);
                let twice = shield(s, once.action, &cfg, 1.0);
                assert_eq!(twice.action, once.action);
            }
        }
    }
}
