//! Deterministic-policy agents: DDPG (one critic) and TD3 (twin critics,
//! target smoothing and delayed actor updates).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};

use super::nets::{critic_loss, q_and_action_grad, q_values, AgentHyper, HEAD_INIT};
use super::replay::Batch;
use super::{Agent, LossReport};
use crate::config::AgentKind;
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamHyper, AdamState, Mlp, ParamVector};
use crate::rng::SimRng;

pub const TD3_TARGET_NOISE: f64 = 0.2;
pub const TD3_NOISE_CLIP: f64 = 0.5;
pub const TD3_POLICY_DELAY: u64 = 2;

/// `-mean(Q(s, pi(s)))` and its actor gradient.
pub fn deterministic_actor_loss(
    actor: &Mlp,
    critic: &Mlp,
    states: ArrayView2<'_, f64>,
    want_grad: bool,
) -> Result<(f64, Option<ParamVector>)> {
    let m = states.nrows() as f64;
    let (a, tape) = actor.forward_batch(states)?;
    let w = Array1::from_elem(states.nrows(), -1.0 / m);
    let (q, qa) = q_and_action_grad(critic, states, a.view(), &w)?;
    let loss = -q.mean().unwrap_or(0.0);
    if !want_grad {
        return Ok((loss, None));
    }
    Ok((loss, Some(actor.backward(&tape, qa.view())?.0)))
}

/// Clipped Gaussian smoothing noise for TD3 targets.
pub fn target_noise(rng: &mut SimRng, rows: usize, cols: usize) -> Array2<f64> {
    let n = Normal::new(0.0, TD3_TARGET_NOISE).expect("valid std");
    Array2::from_shape_simple_fn((rows, cols), || n.sample(rng).clamp(-TD3_NOISE_CLIP, TD3_NOISE_CLIP))
}

#[derive(Debug, Clone)]
pub struct Deterministic {
    twin: bool,
    hyper: AgentHyper,
    adam: AdamHyper,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critics: Vec<Mlp>,
    pub critic_targets: Vec<Mlp>,
    actor_opt: AdamState,
    critic_opt: Vec<AdamState>,
    updates: u64,
    last_actor_loss: f64,
}

impl Deterministic {
    pub fn ddpg(hyper: AgentHyper, rng: &mut SimRng) -> Self {
        Self::new(hyper, false, rng)
    }

    pub fn td3(hyper: AgentHyper, rng: &mut SimRng) -> Self {
        Self::new(hyper, true, rng)
    }

    fn new(hyper: AgentHyper, twin: bool, rng: &mut SimRng) -> Self {
        let actor = Mlp::new(
            &hyper.sizes(hyper.state_dim, hyper.action_dim),
            Activation::Tanh,
            HEAD_INIT,
            rng,
        );
        let critics: Vec<Mlp> = (0..if twin { 2 } else { 1 }).map(|_| hyper.critic(rng)).collect();
        Deterministic {
            twin,
            hyper,
            adam: AdamHyper::with_lr(hyper.lr),
            actor_target: actor.clone(),
            actor_opt: AdamState::new(actor.params().len()),
            critic_opt: critics.iter().map(|c| AdamState::new(c.params().len())).collect(),
            critic_targets: critics.clone(),
            critics,
            actor,
            updates: 0,
            last_actor_loss: 0.0,
        }
    }

    pub fn td_targets(&self, batch: &Batch, reward_scale: f64, smoothing: Option<&Array2<f64>>) -> Result<Array1<f64>> {
        let next = batch.next_states.view();
        let mut a = self.actor_target.predict(next)?;
        if let Some(noise) = smoothing {
            a = (a + noise).mapv(|v| v.clamp(-1.0, 1.0));
        }
        let mut q = q_values(&self.critic_targets[0], next, a.view())?;
        if self.twin {
            let q2 = q_values(&self.critic_targets[1], next, a.view())?;
            q.zip_mut_with(&q2, |x, y| *x = x.min(*y));
        }
        Ok(Array1::from_shape_fn(batch.len(), |i| {
            reward_scale * batch.rewards[i] + self.hyper.gamma * q[i]
        }))
    }
}

impl Agent for Deterministic {
    fn kind(&self) -> AgentKind {
        if self.twin {
            AgentKind::Td3
        } else {
            AgentKind::Ddpg
        }
    }

    fn act(&self, state: ArrayView1<'_, f64>, explore: bool, rng: &mut SimRng) -> Result<Vec<f64>> {
        let a = self.actor.predict(state.insert_axis(Axis(0)))?;
        let mut a = a.row(0).to_vec();
        if explore && self.hyper.exploration_noise > 0.0 {
            let n = Normal::new(0.0, self.hyper.exploration_noise).expect("valid std");
            for v in &mut a {
                *v = (*v + n.sample(rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    fn update(&mut self, batch: &Batch, reward_scale: f64, rng: &mut SimRng) -> Result<LossReport> {
        let smoothing = self
            .twin
            .then(|| target_noise(rng, batch.len(), self.hyper.action_dim));
        let y = self.td_targets(batch, reward_scale, smoothing.as_ref())?;
        let mut critic_total = 0.0;
        for k in 0..self.critics.len() {
            let (loss, grad) = critic_loss(&self.critics[k], batch.states.view(), batch.actions.view(), &y, true)?;
            critic_total += loss;
            self.critics[k].adam(&grad.expect("gradient requested"), &mut self.critic_opt[k], &self.adam)?;
        }
        self.updates += 1;
        if !self.twin || self.updates % TD3_POLICY_DELAY == 0 {
            let (loss, grad) = deterministic_actor_loss(&self.actor, &self.critics[0], batch.states.view(), true)?;
            self.actor.adam(&grad.expect("gradient requested"), &mut self.actor_opt, &self.adam)?;
            self.last_actor_loss = loss;
        }
        Ok(LossReport {
            critic: critic_total / self.critics.len() as f64,
            actor: self.last_actor_loss,
            temperature: 0.0,
            beta: 0.0,
        })
    }

    fn update_targets(&mut self, omega: f64) -> Result<()> {
        self.actor_target.soft_update_from(&self.actor, omega)?;
        for (t, c) in self.critic_targets.iter_mut().zip(&self.critics) {
            t.soft_update_from(c, omega)?;
        }
        Ok(())
    }

    fn params(&self) -> ParamVector {
        let mut sections: Vec<(String, &ParamVector)> = vec![
            ("actor".into(), self.actor.params()),
            ("actor_target".into(), self.actor_target.params()),
        ];
        for (k, c) in self.critics.iter().enumerate() {
            sections.push((format!("critic{}", k + 1), c.params()));
        }
        for (k, c) in self.critic_targets.iter().enumerate() {
            sections.push((format!("target{}", k + 1), c.params()));
        }
        let refs: Vec<(&str, &ParamVector)> = sections.iter().map(|(n, p)| (n.as_str(), *p)).collect();
        ParamVector::concat(&refs)
    }

    fn load_params(&mut self, p: &ParamVector) -> Result<()> {
        let get = |name: &str| p.section(name).ok_or_else(|| Error::Checkpoint(format!("missing section `{name}`")));
        self.actor.set_params(&get("actor")?)?;
        self.actor_target.set_params(&get("actor_target")?)?;
        for k in 0..self.critics.len() {
            self.critics[k].set_params(&get(&format!("critic{}", k + 1))?)?;
            self.critic_targets[k].set_params(&get(&format!("target{}", k + 1))?)?;
        }
        Ok(())
    }
}
