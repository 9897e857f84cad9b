//! Penalty-based reward.
//!
//! `r = −w1·Σ f(δ_i) − w2·(v − v_d)² − w3·#{f(δ_i) ≥ 1} − w4·(Δv)² − w5·[lane changed]`
//! with `f(δ) = exp(−(δ − δ_0))` for same-lane obstacles and 0 otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SensedEnvironment;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w5: f64,
    /// Minimum safe distance δ_0 (m).
    pub delta0: f64,
    /// Desired ego speed (m/s).
    pub v_desired: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { w1: 1.0, w2: 0.5, w3: 20.0, w4: 0.01, w5: 0.01, delta0: 10.0, v_desired: 21.0 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3), ("w4", self.w4), ("w5", self.w5)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("reward.{name} must be a finite non-negative weight, got {w}")));
            }
        }
        if !(self.delta0 > 0.0) {
            return Err(Error::Config(format!("reward.delta0 must be positive, got {}", self.delta0)));
        }
        if !(self.v_desired >= 0.0) {
            return Err(Error::Config(format!("reward.v_desired must be non-negative, got {}", self.v_desired)));
        }
        Ok(())
    }
}

/// A sensed vehicle as the reward sees it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    /// Bumper-to-bumper distance (m), non-negative.
    pub gap: f64,
    pub lane: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub obstacle_sum: f64,
    pub speed_term: f64,
    pub collision_count: f64,
    pub accel_term: f64,
    pub lane_term: f64,
    pub total: f64,
}

pub fn obstacle_penalty(gap: f64, ego_lane: usize, obstacle_lane: usize, delta0: f64) -> f64 {
    if ego_lane == obstacle_lane {
        (-(gap - delta0)).exp()
    } else {
        0.0
    }
}

pub fn speed_penalty(v: f64, v_desired: f64) -> f64 {
    (v - v_desired).powi(2)
}

pub fn accel_penalty(v: f64, v_prev: f64) -> f64 {
    (v - v_prev).powi(2)
}

pub fn lane_penalty(lane: usize, lane_prev: usize) -> f64 {
    if lane != lane_prev {
        1.0
    } else {
        0.0
    }
}

pub fn total_reward(
    obstacles: &[Obstacle],
    v: f64,
    v_prev: f64,
    lane: usize,
    lane_prev: usize,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let mut obstacle_sum = 0.0;
    let mut collision_count = 0.0;
    for o in obstacles {
        let f = obstacle_penalty(o.gap, lane, o.lane, cfg.delta0);
        obstacle_sum += f;
        if f >= 1.0 {
            collision_count += 1.0;
        }
    }
    combine(obstacle_sum, collision_count, v, v_prev, lane, lane_prev, cfg)
}

/// Weighted total from an already accumulated obstacle sum and count.
pub fn combine(
    obstacle_sum: f64,
    collision_count: f64,
    v: f64,
    v_prev: f64,
    lane: usize,
    lane_prev: usize,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let speed_term = speed_penalty(v, cfg.v_desired);
    let accel_term = accel_penalty(v, v_prev);
    let lane_term = lane_penalty(lane, lane_prev);
    let total = -cfg.w1 * obstacle_sum
        - cfg.w2 * speed_term
        - cfg.w3 * collision_count
        - cfg.w4 * accel_term
        - cfg.w5 * lane_term;
    RewardBreakdown { obstacle_sum, speed_term, collision_count, accel_term, lane_term, total }
}

/// Every sensed neighbour as an obstacle; overlapping vehicles get gap 0.
pub fn obstacles_from(sensed: &SensedEnvironment) -> Vec<Obstacle> {
    sensed
        .neighbors
        .iter()
        .map(|n| Obstacle { gap: sensed.gap(n).max(0.0), lane: n.lane })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const E_INV: f64 = 0.367_879_441_171_442_3;

    #[test]
    fn obstacle_penalty_values() {
        assert_eq!(obstacle_penalty(10.0, 1, 1, 10.0), 1.0);
        assert!((obstacle_penalty(11.0, 1, 1, 10.0) - E_INV).abs() < 1e-12);
        assert_eq!(obstacle_penalty(3.0, 1, 2, 10.0), 0.0);
        assert!(obstacle_penalty(12.0, 0, 0, 10.0) < obstacle_penalty(11.5, 0, 0, 10.0));
    }

    #[test]
    fn quadratic_and_indicator_terms() {
        assert_eq!(speed_penalty(21.0, 21.0), 0.0);
        assert_eq!(speed_penalty(18.0, 21.0), 9.0);
        assert_eq!(speed_penalty(19.0, 21.0), speed_penalty(23.0, 21.0));
        assert_eq!(speed_penalty(19.0, 21.0), 4.0);
        assert_eq!(accel_penalty(15.0, 15.0), 0.0);
        assert_eq!(accel_penalty(17.0, 15.0), 4.0);
        assert_eq!(accel_penalty(14.0, 15.0), 1.0);
        assert_eq!(lane_penalty(1, 1), 0.0);
        assert_eq!(lane_penalty(2, 1), 1.0);
        assert_eq!(lane_penalty(0, 1), 1.0);
    }

    #[test]
    fn total_examples() {
        let cfg = RewardConfig::default();
        assert_eq!(total_reward(&[], 21.0, 21.0, 1, 1, &cfg).total, 0.0);
        let r = total_reward(&[Obstacle { gap: 11.0, lane: 1 }], 21.0, 21.0, 1, 1, &cfg);
        assert!((r.total + E_INV).abs() < 1e-12);
        assert_eq!(r.collision_count, 0.0);
        let r = total_reward(&[Obstacle { gap: 10.0, lane: 1 }], 21.0, 21.0, 1, 1, &cfg);
        assert_eq!(r.total, -21.0);
        assert_eq!(r.collision_count, 1.0);
    }

    #[test]
    fn validation_names_the_field() {
        let cfg = RewardConfig { w3: -1.0, ..RewardConfig::default() };
        assert!(cfg.validate().unwrap_err().to_string().contains("reward.w3"));
        assert!(RewardConfig { delta0: 0.0, ..RewardConfig::default() }.validate().is_err());
    }
}
