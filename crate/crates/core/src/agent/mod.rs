//! Double deep Q-learning agent.

mod env;
mod learner;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Action, ActionMask};
use crate::error::{Error, Result};
use crate::nn::AdamConfig;
use crate::per::PerConfig;
use crate::sim::SensedEnvironment;

pub use env::{EgoEnv, EnvStep};
pub use learner::{td_targets, train_step, DdqnAgent, TrainStats};
pub use train::{train, train_with, EpisodeRecord, TrainOutcome};

/// `ε` decays from `eps_max` to within this distance of `eps_min` over a
/// desk-scale budget.
pub const EPSILON_TERMINATION: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    pub gamma: f64,
    pub batch_size: usize,
    /// Gradient steps between target-network copies.
    pub target_sync: u64,
    /// Exploration decay rate per training step.
    pub lambda: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    /// Hard cap on environment steps.
    pub max_steps: u64,
    /// Decisions per training episode.
    pub horizon: usize,
    /// Transitions required before the first gradient step.
    pub warmup: usize,
    /// Factor applied to rewards before they enter the replay memory.
    pub reward_scale: f64,
    /// Residual beyond which the loss grows linearly; unbounded gives the
    /// plain squared loss.
    pub huber: Option<f64>,
    pub adam: AdamConfig,
    pub per: PerConfig,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 0.995,
            batch_size: 64,
            target_sync: 1000,
            lambda: 7.5e-6,
            eps_min: 0.01,
            eps_max: 1.0,
            max_steps: 2_000_000,
            horizon: 60,
            warmup: 64,
            reward_scale: 1.0,
            huber: None,
            adam: AdamConfig::default(),
            per: PerConfig::default(),
        }
    }
}

impl Hyperparams {
    /// Schedule compressed into `budget` steps: `λ` is chosen so that `ε`
    /// meets the termination criterion exactly at the budget.
    pub fn desk_scale(budget: u64) -> Self {
        let base = Hyperparams::default();
        let span = base.eps_max - base.eps_min;
        Hyperparams { lambda: (span / EPSILON_TERMINATION).ln() / budget as f64, max_steps: budget, ..base }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("agent.{field} {why}")));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if self.target_sync == 0 {
            return bad("target_sync", "must be at least 1");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda", "must be positive");
        }
        if !(0.0 <= self.eps_min && self.eps_min <= self.eps_max && self.eps_max <= 1.0) {
            return bad("eps_min", "and agent.eps_max must satisfy 0 <= eps_min <= eps_max <= 1");
        }
        if !(self.reward_scale > 0.0) {
            return bad("reward_scale", "must be positive");
        }
        if self.huber.is_some_and(|c| !(c > 0.0)) {
            return bad("huber", "must be positive");
        }
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1");
        }
        if self.per.capacity < self.batch_size.max(self.warmup) {
            return bad("per.capacity", "must hold at least one warmup batch");
        }
        Ok(())
    }
}

/// Exploration rate after `k` training steps: `ε_min + (ε_max − ε_min)·e^{−λk}`.
pub fn epsilon(k: u64, hp: &Hyperparams) -> f64 {
    hp.eps_min + (hp.eps_max - hp.eps_min) * (-hp.lambda * k as f64).exp()
}

/// Whether training has annealed to its final exploration rate.
pub fn epsilon_converged(k: u64, hp: &Hyperparams) -> bool {
    epsilon(k, hp) - hp.eps_min <= EPSILON_TERMINATION
}

/// Removes lane changes that leave the road or put the ego alongside a
/// vehicle already occupying the target lane.
pub fn mask_actions(sensed: &SensedEnvironment) -> ActionMask {
    let mut mask = ActionMask::all();
    for action in [Action::ChangeLeft, Action::ChangeRight] {
        match sensed.lane_offset(action.lane_delta()) {
            Some(lane) if !sensed.abreast_in(lane) => {}
            _ => mask.remove(action),
        }
    }
    mask
}

/// Highest-valued permitted action; ties go to the lowest index.
pub fn greedy_action(q: &[f64], mask: ActionMask) -> Action {
    let mut best: Option<(Action, f64)> = None;
    for a in mask.iter() {
        let v = q[a.index()];
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((a, v));
        }
    }
    best.map_or(Action::Keep, |(a, _)| a)
}

/// ε-greedy over the permitted actions.
pub fn select_action<R: Rng + ?Sized>(q: &[f64], mask: ActionMask, eps: f64, rng: &mut R) -> Action {
    // Both draws are always taken so the stream does not depend on ε.
    let explore = rng.gen::<f64>() < eps;
    let pick = rng.gen_range(0..mask.len().max(1));
    if explore {
        mask.iter().nth(pick).unwrap_or(Action::Keep)
    } else {
        greedy_action(q, mask)
    }
}
