use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{Error, Result};
use crate::reward::{combine, obstacle_penalty, RewardConfig};
use crate::sim::{SimConfig, TrafficMode, VehicleId, WorldState, RANGE_AHEAD, RANGE_BEHIND};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleState {
    pub id: VehicleId,
    pub lane: usize,
    pub x: f64,
    pub length: f64,
}

/// Positions of every vehicle except the ego for steps `0..=horizon`.
/// The ego is removed before stepping, which is exact because manual
/// traffic never reacts to controlled vehicles in constant-speed mode.
pub fn rollout_obstacles(world: &WorldState, config: &SimConfig, horizon: usize) -> Result<Vec<Vec<ObstacleState>>> {
    if config.mode != TrafficMode::ConstantSpeed {
        return Err(Error::Planner("obstacle prediction needs constant-speed traffic".into()));
    }
    let mut w = world.clone();
    if let Some(ego) = w.ego_id {
        w.remove(ego);
    }
    w.drop_controlled_entries();
    if w.vehicles.iter().any(|v| v.controlled) {
        return Err(Error::Planner("scenario has more than one controlled vehicle".into()));
    }
    let snapshot = |w: &WorldState| {
        w.vehicles.iter().map(|v| ObstacleState { id: v.id, lane: v.lane, x: v.x, length: v.length }).collect()
    };
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(snapshot(&w));
    for _ in 0..horizon {
        w.step(&[], config)?;
        out.push(snapshot(&w));
    }
    Ok(out)
}

/// Ego state on the planning grid. `pos` counts half metres from the
/// ego's initial position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EgoGridState {
    pub lane: usize,
    pub v: u32,
    pub pos: i64,
}

/// Everything the planner needs: predicted traffic, the ego's start and
/// the reward.
#[derive(Clone, Debug)]
pub struct DpProblem {
    /// Obstacles per step, `horizon + 1` entries.
    pub obstacles: Vec<Vec<ObstacleState>>,
    pub start: EgoGridState,
    pub x0: f64,
    pub ego_length: f64,
    pub n_lanes: usize,
    pub max_speed: u32,
    pub reward: RewardConfig,
}

impl DpProblem {
    /// Plans from the current ego state of `world` over `horizon` steps.
    pub fn from_world(world: &WorldState, config: &SimConfig, reward: &RewardConfig, horizon: usize) -> Result<Self> {
        if config.dt != 1.0 {
            return Err(Error::Planner("the planning grid needs dt = 1 s".into()));
        }
        let ego = world.ego().ok_or_else(|| Error::Planner("scenario has no ego on the road".into()))?;
        if ego.v.fract() != 0.0 || ego.v < 0.0 || ego.v > config.ego_max_speed {
            return Err(Error::Planner(format!("initial ego speed {} is not on the integer speed grid", ego.v)));
        }
        if config.ego_max_speed.fract() != 0.0 {
            return Err(Error::Planner("ego_max_speed must be an integer".into()));
        }
        Ok(DpProblem {
            obstacles: rollout_obstacles(world, config, horizon)?,
            start: EgoGridState { lane: ego.lane, v: ego.v as u32, pos: 0 },
            x0: ego.x,
            ego_length: ego.length,
            n_lanes: config.n_lanes,
            max_speed: config.ego_max_speed as u32,
            reward: *reward,
        })
    }

    pub fn horizon(&self) -> usize {
        self.obstacles.len().saturating_sub(1)
    }

    pub fn ego_x(&self, pos: i64) -> f64 {
        self.x0 + pos as f64 * 0.5
    }

    /// Grid successor under `action`, or `None` for an off-road lane change.
    pub fn transition(&self, s: EgoGridState, action: Action) -> Option<EgoGridState> {
        if action.is_lane_change() {
            let lane = s.lane as i64 + action.lane_delta() as i64;
            if lane < 0 || lane >= self.n_lanes as i64 {
                return None;
            }
            return Some(EgoGridState { lane: lane as usize, v: s.v, pos: s.pos + 2 * s.v as i64 });
        }
        let v = (s.v as i64 + action.acceleration() as i64).clamp(0, self.max_speed as i64) as u32;
        Some(EgoGridState { lane: s.lane, v, pos: s.pos + s.v as i64 + v as i64 })
    }

    /// Whether a vehicle in `lane` overlaps the ego at step `t`.
    pub fn overlaps(&self, t: usize, lane: usize, pos: i64) -> bool {
        let x = self.ego_x(pos);
        self.obstacles[t].iter().any(|o| o.lane == lane && o.x < x + self.ego_length && o.x + o.length > x)
    }

    /// Lane changes are masked when off-road or when the target lane is
    /// occupied alongside the ego.
    pub fn permitted(&self, t: usize, s: EgoGridState, action: Action) -> bool {
        if !action.is_lane_change() {
            return true;
        }
        let lane = s.lane as i64 + action.lane_delta() as i64;
        lane >= 0 && lane < self.n_lanes as i64 && !self.overlaps(t, lane as usize, s.pos)
    }

    /// Obstacle penalty sum and counted collisions for an ego at `pos` in
    /// `lane` at step `t`, over the sensing window.
    pub fn obstacle_terms(&self, t: usize, lane: usize, pos: i64) -> (f64, f64) {
        let x = self.ego_x(pos);
        let mut sum = 0.0;
        let mut count = 0.0;
        for o in &self.obstacles[t] {
            if o.lane.abs_diff(lane) > 1 {
                continue;
            }
            let rel = o.x - x;
            if !(-RANGE_BEHIND..=RANGE_AHEAD).contains(&rel) {
                continue;
            }
            let gap = if rel >= 0.0 { rel - self.ego_length } else { -rel - o.length };
            let f = obstacle_penalty(gap.max(0.0), lane, o.lane, self.reward.delta0);
            sum += f;
            if f >= 1.0 {
                count += 1.0;
            }
        }
        (sum, count)
    }

    /// Cost of taking a step from `s` to `next`, given the obstacle terms
    /// at the arrival state.
    pub fn stage_cost_from(&self, s: EgoGridState, next: EgoGridState, terms: (f64, f64)) -> f64 {
        -combine(terms.0, terms.1, next.v as f64, s.v as f64, next.lane, s.lane, &self.reward).total
    }

    /// Negated reward of moving from `s` at step `t` under `action`.
    pub fn stage_cost(&self, t: usize, s: EgoGridState, action: Action) -> Option<(EgoGridState, f64)> {
        let next = self.transition(s, action)?;
        let terms = self.obstacle_terms(t + 1, next.lane, next.pos);
        Some((next, self.stage_cost_from(s, next, terms)))
    }
}
