use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::action::{Action, ActionMask};
use crate::codec::StateVector;
use crate::error::Result;
use crate::nn::{adam_step, AdamState, MlpParams, Q_LAYERS};
use crate::per::{PrioritizedMemory, Transition};
use crate::seed;

use super::{greedy_action, select_action, Hyperparams};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainStats {
    pub loss: f64,
    /// Absolute TD differences of the sampled transitions before the update.
    pub td: Vec<f64>,
    pub indices: Vec<usize>,
    pub synced: bool,
}

/// Double-DQN targets: the online network picks the next action among the
/// permitted ones, the target network values it.
pub fn td_targets(batch: &[&Transition], online: &MlpParams, target: &MlpParams, gamma: f64) -> Result<Vec<f64>> {
    let n = batch.len();
    let n_out = online.output_len();
    let mut next = Vec::with_capacity(n * online.input_len());
    for t in batch {
        next.extend_from_slice(t.s_next.as_slice());
    }
    let q_online = online.forward_batch(&next, n)?;
    let q_target = target.forward_batch(&next, n)?;
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.done {
                return t.r;
            }
            let row = &q_online[i * n_out..(i + 1) * n_out];
            let a = greedy_action(row, t.next_mask).index();
            t.r + gamma * q_target[i * n_out + a]
        })
        .collect())
}

/// One gradient step on a prioritized minibatch. `k` is the gradient-step
/// count including this one; the target network is refreshed whenever it
/// is a multiple of `hp.target_sync`.
#[allow(clippy::too_many_arguments)]
pub fn train_step<R: Rng + ?Sized>(
    online: &mut MlpParams,
    target: &mut MlpParams,
    opt: &mut AdamState,
    memory: &mut PrioritizedMemory,
    hp: &Hyperparams,
    k: u64,
    rng: &mut R,
) -> Result<TrainStats> {
    let indices = memory.sample(hp.batch_size, rng)?;
    let batch: Vec<&Transition> = indices.iter().map(|&i| memory.get(i).unwrap()).collect();
    let targets = td_targets(&batch, online, target, hp.gamma)?;
    let mut states = Vec::with_capacity(batch.len() * online.input_len());
    for t in &batch {
        states.extend_from_slice(t.s.as_slice());
    }
    let actions: Vec<usize> = batch.iter().map(|t| t.a).collect();
    let g = online.backward_batch_huber(&states, &actions, &targets, hp.huber.unwrap_or(f64::INFINITY))?;
    adam_step(online.as_mut_slice(), &g.grad, opt)?;
    let td: Vec<f64> = g.residuals.iter().map(|r| r.abs()).collect();
    memory.update_priorities(&indices, &td)?;
    let synced = k % hp.target_sync == 0;
    if synced {
        target.as_mut_slice().copy_from_slice(online.as_slice());
    }
    Ok(TrainStats { loss: g.loss, td, indices, synced })
}

/// Online and target networks, optimizer, replay memory and the agent's
/// own random stream.
#[derive(Clone, Debug)]
pub struct DdqnAgent {
    pub online: MlpParams,
    pub target: MlpParams,
    pub opt: AdamState,
    pub memory: PrioritizedMemory,
    pub hp: Hyperparams,
    pub grad_steps: u64,
    rng: ChaCha8Rng,
}

impl DdqnAgent {
    pub fn new(hp: Hyperparams, master_seed: u64) -> Result<Self> {
        hp.validate()?;
        let online = MlpParams::init(&Q_LAYERS, &mut seed::rng(master_seed, seed::DOMAIN_INIT, 0))?;
        Ok(DdqnAgent {
            target: online.clone(),
            opt: AdamState::for_params(&online, hp.adam),
            online,
            memory: PrioritizedMemory::new(hp.per)?,
            hp,
            grad_steps: 0,
            rng: seed::rng(master_seed, seed::DOMAIN_AGENT, 0),
        })
    }

    pub fn q_values(&self, state: &StateVector) -> Result<Vec<f64>> {
        self.online.forward(state.as_slice())
    }

    pub fn act(&mut self, state: &StateVector, mask: ActionMask, eps: f64) -> Result<Action> {
        let q = self.q_values(state)?;
        Ok(select_action(&q, mask, eps, &mut self.rng))
    }

    pub fn remember(&mut self, t: Transition) {
        self.memory.push(t);
    }

    /// A gradient step once the memory holds a warmup batch.
    pub fn learn(&mut self) -> Result<Option<TrainStats>> {
        if self.memory.len() < self.hp.warmup.max(1) {
            return Ok(None);
        }
        self.grad_steps += 1;
        let stats = train_step(
            &mut self.online,
            &mut self.target,
            &mut self.opt,
            &mut self.memory,
            &self.hp,
            self.grad_steps,
            &mut self.rng,
        )?;
        Ok(Some(stats))
    }
}
