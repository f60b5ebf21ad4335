//! Soft actor-critic with a tanh-squashed diagonal Gaussian policy, twin
//! critics with soft-updated targets and a learned entropy temperature.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::nets::{critic_loss, q_and_action_grad, q_values, AgentHyper, HEAD_INIT};
use super::replay::Batch;
use super::{Agent, LossReport};
use crate::config::AgentKind;
use crate::error::{Error, Result};
use crate::nn::{AdamHyper, AdamState, Mlp, ParamShape, ParamVector, Tape};
use crate::nn::Activation;
use crate::rng::SimRng;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 - tanh(u)^2)` without cancellation for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Log-density of `tanh(u)` for one coordinate, `u ~ N(mean, exp(log_std)^2)`.
pub fn squashed_log_prob(u: f64, mean: f64, log_std: f64) -> f64 {
    let eps = (u - mean) / log_std.exp();
    -0.5 * eps * eps - log_std - HALF_LN_2PI - log_one_minus_tanh_sq(u)
}

/// Reparameterized draw from the policy for a batch of states.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub actions: Array2<f64>,
    pub log_prob: Array1<f64>,
    pub std: Array2<f64>,
    pub noise: Array2<f64>,
    /// False where the raw log-std head was clamped.
    pub log_std_active: Array2<bool>,
}

pub fn policy_sample(actor: &Mlp, states: ArrayView2<'_, f64>, noise: ArrayView2<'_, f64>) -> Result<(PolicySample, Tape)> {
    let (out, tape) = actor.forward_batch(states)?;
    let a_dim = out.ncols() / 2;
    let mean = out.slice(s![.., ..a_dim]);
    let raw_ls = out.slice(s![.., a_dim..]);
    let log_std_active = raw_ls.mapv(|v| (LOG_STD_MIN..=LOG_STD_MAX).contains(&v));
    let log_std = raw_ls.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    let std = log_std.mapv(f64::exp);
    let u = &mean + &(&std * &noise);
    let mut log_prob = Array1::zeros(out.nrows());
    for i in 0..out.nrows() {
        log_prob[i] = (0..a_dim)
            .map(|j| squashed_log_prob(u[[i, j]], mean[[i, j]], log_std[[i, j]]))
            .sum();
    }
    Ok((
        PolicySample {
            actions: u.mapv(f64::tanh),
            log_prob,
            std,
            noise: noise.to_owned(),
            log_std_active,
        },
        tape,
    ))
}

pub fn draw_noise(rng: &mut SimRng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// `mean(beta * log_pi(a|s) - min(Q1, Q2)(s, a))` with `a` drawn using the
/// given noise, and its gradient with respect to the actor parameters.
/// Also returns the batch mean of `log_pi`.
pub fn actor_loss(
    actor: &Mlp,
    critics: [&Mlp; 2],
    states: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
    beta: f64,
    want_grad: bool,
) -> Result<(f64, Option<ParamVector>, f64)> {
    let m = states.nrows();
    let (sample, tape) = policy_sample(actor, states, noise)?;
    let a = sample.actions.view();
    let q1 = q_values(critics[0], states, a)?;
    let q2 = q_values(critics[1], states, a)?;
    let use_first = Array1::from_shape_fn(m, |i| q1[i] <= q2[i]);
    let q_min = Array1::from_shape_fn(m, |i| q1[i].min(q2[i]));
    let mean_logp = sample.log_prob.mean().unwrap_or(0.0);
    let loss = beta * mean_logp - q_min.mean().unwrap_or(0.0);
    if !want_grad {
        return Ok((loss, None, mean_logp));
    }
    let w1 = use_first.mapv(|b| f64::from(u8::from(b)));
    let w2 = use_first.mapv(|b| f64::from(u8::from(!b)));
    let (_, ga1) = q_and_action_grad(critics[0], states, a, &w1)?;
    let (_, ga2) = q_and_action_grad(critics[1], states, a, &w2)?;
    let qa = ga1 + ga2;

    let a_dim = a.ncols();
    let mut grad_out = Array2::zeros((m, 2 * a_dim));
    let inv = 1.0 / m as f64;
    for i in 0..m {
        for j in 0..a_dim {
            let act = a[[i, j]];
            let sig_eps = sample.std[[i, j]] * sample.noise[[i, j]];
            let dq_du = qa[[i, j]] * (1.0 - act * act);
            grad_out[[i, j]] = (beta * 2.0 * act - dq_du) * inv;
            if sample.log_std_active[[i, j]] {
                grad_out[[i, a_dim + j]] = (beta * (-1.0 + 2.0 * act * sig_eps) - dq_du * sig_eps) * inv;
            }
        }
    }
    let (grad, _) = actor.backward(&tape, grad_out.view())?;
    Ok((loss, Some(grad), mean_logp))
}

/// Temperature objective `-log_beta * (mean_logp + target_entropy)` and its
/// derivative in `log_beta`.
pub fn temperature_loss(log_beta: f64, mean_logp: f64, target_entropy: f64) -> (f64, f64) {
    let k = mean_logp + target_entropy;
    (-log_beta * k, -k)
}

#[derive(Debug, Clone)]
pub struct Sac {
    hyper: AgentHyper,
    adam: AdamHyper,
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    pub log_beta: f64,
    actor_opt: AdamState,
    critic_opt: [AdamState; 2],
    beta_opt: AdamState,
}

impl Sac {
    pub fn new(hyper: AgentHyper, rng: &mut SimRng) -> Self {
        let actor = Mlp::new(
            &hyper.sizes(hyper.state_dim, 2 * hyper.action_dim),
            Activation::Identity,
            HEAD_INIT,
            rng,
        );
        let critics = [hyper.critic(rng), hyper.critic(rng)];
        let targets = critics.clone();
        Sac {
            hyper,
            adam: AdamHyper::with_lr(hyper.lr),
            actor_opt: AdamState::new(actor.params().len()),
            critic_opt: [
                AdamState::new(critics[0].params().len()),
                AdamState::new(critics[1].params().len()),
            ],
            beta_opt: AdamState::new(1),
            actor,
            critics,
            targets,
            log_beta: 0.0,
        }
    }

    pub fn beta(&self) -> f64 {
        self.log_beta.exp()
    }

    /// Soft TD targets with actions freshly sampled at the next states.
    pub fn td_targets(&self, batch: &Batch, reward_scale: f64, noise: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let next = batch.next_states.view();
        let (sample, _) = policy_sample(&self.actor, next, noise)?;
        let q1 = q_values(&self.targets[0], next, sample.actions.view())?;
        let q2 = q_values(&self.targets[1], next, sample.actions.view())?;
        let beta = self.beta();
        Ok(Array1::from_shape_fn(batch.len(), |i| {
            reward_scale * batch.rewards[i] + self.hyper.gamma * (q1[i].min(q2[i]) - beta * sample.log_prob[i])
        }))
    }
}

impl Agent for Sac {
    fn kind(&self) -> AgentKind {
        AgentKind::Sac
    }

    fn act(&self, state: ArrayView1<'_, f64>, explore: bool, rng: &mut SimRng) -> Result<Vec<f64>> {
        let s = state.insert_axis(Axis(0));
        let a_dim = self.hyper.action_dim;
        if explore {
            let noise = draw_noise(rng, 1, a_dim);
            let (sample, _) = policy_sample(&self.actor, s, noise.view())?;
            Ok(sample.actions.row(0).to_vec())
        } else {
            let out = self.actor.predict(s)?;
            Ok(out.slice(s![0, ..a_dim]).mapv(f64::tanh).to_vec())
        }
    }

    fn update(&mut self, batch: &Batch, reward_scale: f64, rng: &mut SimRng) -> Result<LossReport> {
        let m = batch.len();
        let a_dim = self.hyper.action_dim;
        let next_noise = draw_noise(rng, m, a_dim);
        let y = self.td_targets(batch, reward_scale, next_noise.view())?;
        let mut critic_total = 0.0;
        for k in 0..2 {
            let (loss, grad) = critic_loss(&self.critics[k], batch.states.view(), batch.actions.view(), &y, true)?;
            critic_total += loss;
            self.critics[k].adam(&grad.expect("gradient requested"), &mut self.critic_opt[k], &self.adam)?;
        }

        let noise = draw_noise(rng, m, a_dim);
        let beta = self.beta();
        let (actor_loss, grad, mean_logp) = actor_loss(
            &self.actor,
            [&self.critics[0], &self.critics[1]],
            batch.states.view(),
            noise.view(),
            beta,
            true,
        )?;
        self.actor.adam(&grad.expect("gradient requested"), &mut self.actor_opt, &self.adam)?;

        let (temp_loss, d_log_beta) = temperature_loss(self.log_beta, mean_logp, self.hyper.target_entropy);
        let mut lb = [self.log_beta];
        crate::nn::adam_step(&mut lb, &[d_log_beta], &mut self.beta_opt, &self.adam);
        if !lb[0].is_finite() {
            return Err(Error::NonFinite("log_beta".into()));
        }
        self.log_beta = lb[0];
        Ok(LossReport {
            critic: 0.5 * critic_total,
            actor: actor_loss,
            temperature: temp_loss,
            beta: self.beta(),
        })
    }

    fn update_targets(&mut self, omega: f64) -> Result<()> {
        for k in 0..2 {
            self.targets[k].soft_update_from(&self.critics[k], omega)?;
        }
        Ok(())
    }

    fn params(&self) -> ParamVector {
        let lb = ParamVector::from_values(vec![ParamShape::new("value", vec![1])], vec![self.log_beta])
            .expect("finite temperature");
        ParamVector::concat(&[
            ("actor", self.actor.params()),
            ("critic1", self.critics[0].params()),
            ("critic2", self.critics[1].params()),
            ("target1", self.targets[0].params()),
            ("target2", self.targets[1].params()),
            ("log_beta", &lb),
        ])
    }

    fn load_params(&mut self, p: &ParamVector) -> Result<()> {
        let get = |name: &str| p.section(name).ok_or_else(|| Error::Checkpoint(format!("missing section `{name}`")));
        self.actor.set_params(&get("actor")?)?;
        self.critics[0].set_params(&get("critic1")?)?;
        self.critics[1].set_params(&get("critic2")?)?;
        self.targets[0].set_params(&get("target1")?)?;
        self.targets[1].set_params(&get("target2")?)?;
        self.log_beta = get("log_beta")?.values()[0];
        Ok(())
    }
}
