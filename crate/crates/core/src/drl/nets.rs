use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::config::SimConfig;
use crate::error::Result;
use crate::nn::{Activation, HeadInit, Mlp, ParamVector};

/// Output layers of actors and critics start near zero.
pub const HEAD_INIT: HeadInit = HeadInit::Small(3e-3);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentHyper {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden_width: usize,
    pub n_hidden: usize,
    pub gamma: f64,
    pub lr: f64,
    pub target_entropy: f64,
    pub exploration_noise: f64,
}

impl AgentHyper {
    pub fn from_config(cfg: &SimConfig) -> Self {
        AgentHyper {
            state_dim: cfg.state_dim(),
            action_dim: cfg.action_dim(),
            hidden_width: cfg.hidden_width,
            n_hidden: cfg.n_hidden,
            gamma: cfg.gamma,
            lr: cfg.adam_lr,
            target_entropy: cfg.target_entropy(),
            exploration_noise: cfg.exploration_noise,
        }
    }

    pub fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(std::iter::repeat_n(self.hidden_width, self.n_hidden));
        s.push(output);
        s
    }

    pub fn critic<R: Rng + ?Sized>(&self, rng: &mut R) -> Mlp {
        Mlp::new(
            &self.sizes(self.state_dim + self.action_dim, 1),
            Activation::Identity,
            HEAD_INIT,
            rng,
        )
    }
}

pub fn state_action(states: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>) -> Array2<f64> {
    concatenate(Axis(1), &[states, actions]).expect("batch sizes agree")
}

pub fn q_values(critic: &Mlp, states: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    Ok(critic.predict(state_action(states, actions).view())?.column(0).to_owned())
}

/// Q values and `d(sum_i w_i Q_i)/d a` for a batch.
pub fn q_and_action_grad(
    critic: &Mlp,
    states: ArrayView2<'_, f64>,
    actions: ArrayView2<'_, f64>,
    weights: &Array1<f64>,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let (q, tape) = critic.forward_batch(state_action(states, actions).view())?;
    let g = weights.view().insert_axis(Axis(1)).to_owned();
    let (_, dx) = critic.backward(&tape, g.view())?;
    Ok((q.column(0).to_owned(), dx.slice(s![.., states.ncols()..]).to_owned()))
}

/// `0.5 * mean((Q - y)^2)` and its parameter gradient.
pub fn critic_loss(
    critic: &Mlp,
    states: ArrayView2<'_, f64>,
    actions: ArrayView2<'_, f64>,
    targets: &Array1<f64>,
    want_grad: bool,
) -> Result<(f64, Option<ParamVector>)> {
    let (q, tape) = critic.forward_batch(state_action(states, actions).view())?;
    let residual = &q.column(0) - targets;
    let m = targets.len() as f64;
    let loss = 0.5 * residual.mapv(|r| r * r).sum() / m;
    if !want_grad {
        return Ok((loss, None));
    }
    let g = (residual / m).insert_axis(Axis(1));
    Ok((loss, Some(critic.backward(&tape, g.view())?.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn critic_gradient_matches_finite_difference() {
        let hyper = AgentHyper {
            state_dim: 3,
            action_dim: 2,
            hidden_width: 8,
            n_hidden: 2,
            gamma: 0.9,
            lr: 1e-3,
            target_entropy: -2.0,
            exploration_noise: 0.1,
        };
        let mut rng = stream(1, Stream::Init, 0, 0, 0);
        let critic = Mlp::new(&hyper.sizes(5, 1), Activation::Identity, HeadInit::Kaiming, &mut rng);
        let s = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
        let a = Array2::from_shape_fn((6, 2), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(6, |_| rng.random_range(-2.0..2.0));
        let (_, g) = critic_loss(&critic, s.view(), a.view(), &y, true).unwrap();
        let g = g.unwrap();
        let h = 1e-5;
        for i in 0..critic.params().len() {
            let mut p = critic.clone();
            p.update_params(|v| v[i] += h).unwrap();
            let mut m = critic.clone();
            m.update_params(|v| v[i] -= h).unwrap();
            let fd = (critic_loss(&p, s.view(), a.view(), &y, false).unwrap().0
                - critic_loss(&m, s.view(), a.view(), &y, false).unwrap().0)
                / (2.0 * h);
            let err = (fd - g.values()[i]).abs() / fd.abs().max(g.values()[i].abs()).max(1e-6);
            assert!(err < 1e-4, "{i}: {fd} vs {}", g.values()[i]);
        }
    }
}
