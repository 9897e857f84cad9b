use rand_chacha::ChaCha8Rng;

use crate::action::{Action, ActionMask};
use crate::codec::{encode, GridSpec, StateVector};
use crate::error::{Error, Result};
use crate::reward::{obstacles_from, total_reward, RewardBreakdown, RewardConfig};
use crate::sim::{
    detect_collisions, sense, sense_exact, with_estimated_speeds, CollisionEvent, SensedEnvironment, SimConfig,
    SimEvent, VehicleId, WorldState,
};

use super::mask_actions;

/// A single controlled vehicle in a world, observed through its own
/// (possibly noisy) sensors.
#[derive(Clone, Debug)]
pub struct EgoEnv {
    pub world: WorldState,
    pub sim: SimConfig,
    pub reward: RewardConfig,
    ego: VehicleId,
    noise: ChaCha8Rng,
    observation: SensedEnvironment,
}

#[derive(Clone, Debug)]
pub struct EnvStep {
    pub reward: RewardBreakdown,
    /// Collisions of the ego within the given threshold after the step.
    pub collisions: Vec<CollisionEvent>,
    pub events: Vec<SimEvent>,
}

impl EnvStep {
    pub fn collided(&self) -> bool {
        !self.collisions.is_empty()
    }

    pub fn ego_caused(&self) -> bool {
        self.collisions.iter().any(|c| c.ego_caused)
    }
}

impl EgoEnv {
    /// Builds the scenario and runs it until the ego has entered the road.
    pub fn new(sim: &SimConfig, reward: &RewardConfig, scenario_seed: u64, noise: ChaCha8Rng) -> Result<Self> {
        let mut world = crate::sim::generate_scenario(sim, scenario_seed)?;
        world.advance_until_ego(sim)?;
        Self::from_world(world, sim, reward, noise)
    }

    pub fn from_world(world: WorldState, sim: &SimConfig, reward: &RewardConfig, mut noise: ChaCha8Rng) -> Result<Self> {
        let ego = world.ego_id.ok_or_else(|| Error::Config("scenario has no ego".into()))?;
        let raw = sense(&world, ego, sim.noise_pct, &mut noise)?;
        let observation = with_estimated_speeds(None, raw, sim.dt);
        Ok(EgoEnv { world, sim: sim.clone(), reward: *reward, ego, noise, observation })
    }

    pub fn ego_id(&self) -> VehicleId {
        self.ego
    }

    pub fn observation(&self) -> &SensedEnvironment {
        &self.observation
    }

    pub fn state(&self) -> StateVector {
        encode(&self.observation, &GridSpec::STANDARD)
    }

    pub fn mask(&self) -> ActionMask {
        mask_actions(&self.observation)
    }

    /// Applies `action`, scores the post-action state with noise-free
    /// sensing and reports ego collisions at `collision_threshold`.
    pub fn step(&mut self, action: Action, collision_threshold: f64) -> Result<EnvStep> {
        let before = self.world.vehicle(self.ego).ok_or(Error::UnknownVehicle(self.ego))?.clone();
        let events = self.world.step(&[(self.ego, action)], &self.sim)?;
        let after = self.world.vehicle(self.ego).ok_or(Error::UnknownVehicle(self.ego))?.clone();
        let exact = sense_exact(&self.world, self.ego)?;
        let reward = total_reward(&obstacles_from(&exact), after.v, before.v, after.lane, before.lane, &self.reward);
        let collisions =
            detect_collisions(&self.world, collision_threshold).into_iter().filter(|c| c.vehicle == self.ego).collect();
        let raw = sense(&self.world, self.ego, self.sim.noise_pct, &mut self.noise)?;
        self.observation = with_estimated_speeds(Some(&self.observation), raw, self.sim.dt);
        Ok(EnvStep { reward, collisions, events })
    }
}
