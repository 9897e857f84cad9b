use rand::seq::IteratorRandom;
use rand_chacha::ChaCha8Rng;

use crate::action::{Action, ActionMask};
use crate::agent::{greedy_action, EgoEnv};
use crate::codec::StateVector;
use crate::error::{Error, Result};
use crate::nn::MlpParams;
use crate::shield::{shield, SafetyConfig};
use crate::sim::SensedEnvironment;

use super::metrics::{ScenarioLog, StepRecord};

/// What a policy sees before choosing an action.
pub struct Observation<'a> {
    pub t: u64,
    pub sensed: &'a SensedEnvironment,
    pub state: &'a StateVector,
    pub mask: ActionMask,
}

pub trait Policy {
    fn act(&mut self, obs: &Observation<'_>) -> Result<Action>;
}

/// Greedy action of a Q-network (ε = 0).
pub struct GreedyPolicy<'a> {
    pub net: &'a MlpParams,
}

impl Policy for GreedyPolicy<'_> {
    fn act(&mut self, obs: &Observation<'_>) -> Result<Action> {
        let q = self.net.forward(obs.state.as_slice())?;
        Ok(greedy_action(&q, obs.mask))
    }
}

/// Uniform over the unmasked actions.
pub struct RandomPolicy {
    pub rng: ChaCha8Rng,
}

impl Policy for RandomPolicy {
    fn act(&mut self, obs: &Observation<'_>) -> Result<Action> {
        obs.mask.iter().choose(&mut self.rng).ok_or_else(|| Error::Config("every action is masked".into()))
    }
}

/// Plays back a fixed action sequence, e.g. a planned trajectory.
pub struct ReplayPolicy {
    pub actions: Vec<Action>,
}

impl Policy for ReplayPolicy {
    fn act(&mut self, obs: &Observation<'_>) -> Result<Action> {
        self.actions
            .get(obs.t as usize)
            .copied()
            .ok_or_else(|| Error::Planner(format!("no planned action for step {}", obs.t)))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub steps: usize,
    pub shield: Option<SafetyConfig>,
    /// Gap at or below which a collision is counted and the run ends.
    pub collision_gap: f64,
}

/// Drives one scenario until `steps` decisions have been made or a
/// collision is counted.
pub fn run_scenario(env: &mut EgoEnv, policy: &mut dyn Policy, opts: &RunOptions, scenario: u64) -> Result<ScenarioLog> {
    let ego = env.world.ego().ok_or_else(|| Error::Config("scenario has no ego".into()))?;
    let mut log = ScenarioLog {
        scenario,
        start_lane: ego.lane,
        start_v: ego.v,
        steps: Vec::with_capacity(opts.steps),
        collision: false,
        ego_caused: false,
    };
    for t in 0..opts.steps as u64 {
        let state = env.state();
        let mask = env.mask();
        let proposed = policy.act(&Observation { t, sensed: env.observation(), state: &state, mask })?;
        let (action, overridden) = match &opts.shield {
            Some(cfg) => {
                let d = shield(env.observation(), proposed, cfg, env.sim.dt);
                (d.action, d.overridden)
            }
            None => (proposed, false),
        };
        let out = env.step(action, opts.collision_gap)?;
        let ego = env.world.vehicle(env.ego_id()).ok_or(Error::UnknownVehicle(env.ego_id()))?;
        log.steps.push(StepRecord {
            t,
            proposed,
            action,
            overridden,
            lane: ego.lane,
            x: ego.x,
            v: ego.v,
            reward: out.reward.total,
        });
        if out.collided() {
            log.collision = true;
            log.ego_caused = out.ego_caused();
            break;
        }
    }
    Ok(log)
}
