//! Agents that choose per-vehicle power, CPU frequency and RSU share.

mod action;
mod deterministic;
mod nets;
mod norm;
mod replay;
mod sac;

pub use action::{map_action, reward, MappedAction};
pub use deterministic::{deterministic_actor_loss, target_noise, Deterministic, TD3_NOISE_CLIP, TD3_POLICY_DELAY, TD3_TARGET_NOISE};
pub use nets::{critic_loss, q_values, AgentHyper};
pub use norm::RunningNorm;
pub use replay::{Batch, ReplayBuffer, Transition};
pub use sac::{
    actor_loss, draw_noise, log_one_minus_tanh_sq, policy_sample, squashed_log_prob, temperature_loss, PolicySample,
    Sac, LOG_STD_MAX, LOG_STD_MIN,
};

use ndarray::{ArrayView1, Array1};
use rand::Rng;

use crate::config::{AgentKind, SimConfig};
use crate::error::{Error, Result};
use crate::nn::ParamVector;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub critic: f64,
    pub actor: f64,
    pub temperature: f64,
    pub beta: f64,
}

pub trait Agent: Send {
    fn kind(&self) -> AgentKind;
    /// Raw action in `[-1, 1]` for an already standardized state.
    fn act(&self, state: ArrayView1<'_, f64>, explore: bool, rng: &mut SimRng) -> Result<Vec<f64>>;
    fn update(&mut self, batch: &Batch, reward_scale: f64, rng: &mut SimRng) -> Result<LossReport>;
    fn update_targets(&mut self, omega: f64) -> Result<()>;
    fn params(&self) -> ParamVector;
    fn load_params(&mut self, p: &ParamVector) -> Result<()>;
}

/// Uniform actions; never learns.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    action_dim: usize,
}

impl RandomAgent {
    pub fn new(action_dim: usize) -> Self {
        RandomAgent { action_dim }
    }
}

impl Agent for RandomAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Random
    }

    fn act(&self, _state: ArrayView1<'_, f64>, _explore: bool, rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok((0..self.action_dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
    }

    fn update(&mut self, _batch: &Batch, _reward_scale: f64, _rng: &mut SimRng) -> Result<LossReport> {
        Ok(LossReport::default())
    }

    fn update_targets(&mut self, _omega: f64) -> Result<()> {
        Ok(())
    }

    fn params(&self) -> ParamVector {
        ParamVector::zeros(Vec::new())
    }

    fn load_params(&mut self, _p: &ParamVector) -> Result<()> {
        Ok(())
    }
}

pub fn make_agent(kind: AgentKind, hyper: AgentHyper, rng: &mut SimRng) -> Box<dyn Agent> {
    match kind {
        AgentKind::Sac => Box::new(Sac::new(hyper, rng)),
        AgentKind::Ddpg => Box::new(Deterministic::ddpg(hyper, rng)),
        AgentKind::Td3 => Box::new(Deterministic::td3(hyper, rng)),
        AgentKind::Random => Box::new(RandomAgent::new(hyper.action_dim)),
    }
}

/// An agent together with its replay memory and state standardizer.
/// Transitions are stored raw and standardized with the current statistics
/// when sampled.
pub struct Learner {
    pub agent: Box<dyn Agent>,
    pub replay: ReplayBuffer,
    pub norm: RunningNorm,
    pub minibatch: usize,
    pub reward_scale: f64,
}

impl Learner {
    pub fn new(cfg: &SimConfig, rng: &mut SimRng) -> Self {
        let hyper = AgentHyper::from_config(cfg);
        Learner {
            agent: make_agent(cfg.agent_kind, hyper, rng),
            replay: ReplayBuffer::new(cfg.buffer_capacity),
            norm: RunningNorm::new(cfg.state_dim()),
            minibatch: cfg.minibatch,
            reward_scale: cfg.reward_scale,
        }
    }

    pub fn observe(&mut self, state: &[f64]) {
        self.norm.update(ArrayView1::from(state));
    }

    pub fn act(&self, state: &[f64], explore: bool, rng: &mut SimRng) -> Result<Vec<f64>> {
        let s: Array1<f64> = self.norm.normalize(ArrayView1::from(state));
        self.agent.act(s.view(), explore, rng)
    }

    pub fn push(&mut self, t: Transition) {
        self.replay.push(t);
    }

    pub fn update(&mut self, rng: &mut SimRng) -> Result<LossReport> {
        let items = self.replay.sample(self.minibatch, rng)?;
        let mut batch = Batch::from_transitions(&items);
        batch.states = self.norm.normalize_rows(batch.states.view());
        batch.next_states = self.norm.normalize_rows(batch.next_states.view());
        self.agent.update(&batch, self.reward_scale, rng)
    }

    pub fn checkpoint(&self) -> ParamVector {
        self.agent.params().with_section("state_norm", &self.norm.to_params())
    }

    pub fn restore(&mut self, p: &ParamVector) -> Result<()> {
        let norm = p
            .section("state_norm")
            .ok_or_else(|| Error::Checkpoint("missing section `state_norm`".into()))?;
        let norm = RunningNorm::from_params(&norm)?;
        if norm.dim() != self.norm.dim() {
            return Err(Error::Checkpoint(format!(
                "state width {} in checkpoint, {} expected",
                norm.dim(),
                self.norm.dim()
            )));
        }
        self.agent.load_params(p)?;
        self.norm = norm;
        Ok(())
    }
}
