use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::per::Transition;
use crate::reward::RewardConfig;
use crate::seed;
use crate::sim::SimConfig;

use super::{epsilon, epsilon_converged, DdqnAgent, EgoEnv, Hyperparams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Environment steps taken when the episode ended.
    pub step: u64,
    pub episode: u64,
    #[serde(rename = "return")]
    pub ret: f64,
    /// Mean minibatch loss over the episode's gradient steps.
    pub loss: f64,
    pub epsilon: f64,
    /// Steps that ended with a counted collision.
    pub collisions: u32,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub agent: DdqnAgent,
    pub log: Vec<EpisodeRecord>,
    /// Loss of every gradient step in order.
    pub losses: Vec<f64>,
    pub env_steps: u64,
}

pub fn train(sim: &SimConfig, hp: &Hyperparams, reward: &RewardConfig, master_seed: u64) -> Result<TrainOutcome> {
    train_with(sim, hp, reward, master_seed, |_| {})
}

/// Runs episodes until the exploration schedule has converged or the step
/// budget is spent. Counted collisions are penalized through the reward and
/// tallied; physical overlap ends the episode as terminal.
pub fn train_with(
    sim: &SimConfig,
    hp: &Hyperparams,
    reward: &RewardConfig,
    master_seed: u64,
    mut on_episode: impl FnMut(&EpisodeRecord),
) -> Result<TrainOutcome> {
    sim.validate()?;
    reward.validate()?;
    let mut agent = DdqnAgent::new(*hp, master_seed)?;
    let mut log = Vec::new();
    let mut losses = Vec::new();
    let mut k: u64 = 0;
    let mut episode: u64 = 0;
    while k < hp.max_steps && !epsilon_converged(k, hp) {
        let scenario_seed = seed::derive(master_seed, seed::DOMAIN_TRAIN_SCENARIO, episode);
        let noise = seed::rng(master_seed, seed::DOMAIN_NOISE, episode);
        let mut env = EgoEnv::new(sim, reward, scenario_seed, noise)?;
        let mut ret = 0.0;
        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;
        let mut collisions = 0;
        let mut state = env.state();
        for _ in 0..hp.horizon {
            let eps = epsilon(k, hp);
            let action = agent.act(&state, env.mask(), eps)?;
            let out = env.step(action, reward.delta0)?;
            let next = env.state();
            let done = out.collisions.iter().any(|c| c.severe);
            agent.remember(Transition {
                s: state,
                a: action.index(),
                r: out.reward.total * hp.reward_scale,
                s_next: next.clone(),
                done,
                next_mask: env.mask(),
            });
            if let Some(stats) = agent.learn()? {
                loss_sum += stats.loss;
                loss_n += 1;
                losses.push(stats.loss);
            }
            k += 1;
            ret += out.reward.total;
            state = next;
            if out.collided() {
                collisions += 1;
            }
            if done {
                break;
            }
            if k >= hp.max_steps {
                break;
            }
        }
        let record = EpisodeRecord {
            step: k,
            episode,
            ret,
            loss: if loss_n > 0 { loss_sum / loss_n as f64 } else { 0.0 },
            epsilon: epsilon(k, hp),
            collisions,
        };
        on_episode(&record);
        log.push(record);
        episode += 1;
    }
    Ok(TrainOutcome { agent, log, losses, env_steps: k })
}
