use rand::Rng;

use super::losses::{actor_loss, alpha_loss, critic_loss, critic_targets};
use super::policy::standard_normal;
use super::Agent;
use crate::diffmath::{AdamState, Graph, Parameterized, Tensor};
use crate::error::{Error, Result};

/// One Adam state per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub belief: AdamState,
    pub decoder: AdamState,
    pub policy: AdamState,
    pub critic: AdamState,
    pub alpha: AdamState,
}

impl Optimizers {
    pub fn new(agent: &Agent, lr: f64) -> Self {
        Optimizers {
            belief: AdamState::for_params(lr, &agent.net.params()),
            decoder: AdamState::for_params(lr, &agent.decoder.params()),
            policy: AdamState::for_params(lr, &agent.policy.params()),
            critic: AdamState::for_params(lr, &agent.critics.online_params()),
            alpha: AdamState::for_params(lr, &agent.temp.params()),
        }
    }
}

/// Replayed transitions with the observation history needed to rebuild
/// beliefs. Each window holds effective inputs up to and including step
/// `t + 1`; its last two beliefs are `b_t` and `b_{t+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBatch {
    pub windows: Vec<Vec<Vec<f64>>>,
    pub actions: Tensor,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub weights: Vec<f64>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateConfig {
    pub gamma: f64,
    pub tau: f64,
    pub truncate: Option<usize>,
    /// Keep the `−α·log π` term in critic targets. Without it the entropy
    /// bonus only shapes the actor, and an agent cannot earn value by
    /// loitering in states where its policy is broad.
    pub entropy_backup: bool,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        UpdateConfig {
            gamma: 0.99,
            tau: 0.005,
            truncate: None,
            entropy_backup: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    pub mean_q_target: f64,
    pub td_errors: Vec<f64>,
    pub belief_grad_norm: f64,
    pub observer_grad_norm: f64,
}

fn norm(ts: &[Tensor]) -> f64 {
    ts.iter().map(|t| t.norm().powi(2)).sum::<f64>().sqrt()
}

/// Critic step, actor step through the belief network, temperature step,
/// then Polyak averaging of the target critics.
pub fn joint_update<R: Rng + ?Sized>(
    agent: &mut Agent,
    batch: &TransitionBatch,
    opt: &mut Optimizers,
    cfg: &UpdateConfig,
    rng: &mut R,
) -> Result<UpdateReport> {
    let m = batch.len();
    if m == 0 {
        return Err(Error::contract("joint_update on an empty batch"));
    }
    if batch.windows.len() != m
        || batch.dones.len() != m
        || batch.weights.len() != m
        || batch.actions.rows() != m
    {
        return Err(Error::contract("transition batch fields differ in length"));
    }
    if batch.windows.iter().any(|w| w.len() < 2) {
        return Err(Error::contract("each replay window needs steps t and t+1"));
    }
    let a_dim = agent.policy.action_dim;
    let Agent {
        net,
        policy,
        critics,
        temp,
        ..
    } = agent;
    let alpha = temp.alpha();

    let refs: Vec<&[Vec<f64>]> = batch.windows.iter().map(|w| w.as_slice()).collect();
    let mut g = Graph::new();
    let packed = net.encode_sequence_batch(&mut g, &refs, cfg.truncate)?;
    let idx_t: Vec<usize> = (0..m)
        .map(|i| packed.row(i, packed.lengths[i] - 2))
        .collect();
    let idx_next: Vec<usize> = (0..m)
        .map(|i| packed.row(i, packed.lengths[i] - 1))
        .collect();
    let b_t = g.gather_rows(packed.beliefs, &idx_t)?;
    let b_next_var = g.gather_rows(packed.beliefs, &idx_next)?;
    let b_next = g.value(b_next_var).clone();
    let b_t_value = g.value(b_t).clone();

    let eps_next = standard_normal(&[m, a_dim], rng);
    let backup_alpha = if cfg.entropy_backup { alpha } else { 0.0 };
    let targets = critic_targets(
        critics,
        policy,
        &batch.rewards,
        &b_next,
        cfg.gamma,
        &batch.dones,
        backup_alpha,
        eps_next,
    )?;
    let mean_q_target = targets.iter().sum::<f64>() / m as f64;

    let (critic_value, td_errors) = {
        let mut gc = Graph::new();
        let b = gc.constant(b_t_value);
        let a = gc.constant(batch.actions.clone());
        let (loss, td) = critic_loss(&mut gc, critics, b, a, &targets, Some(&batch.weights))?;
        gc.backward(loss)?;
        let grads = critics.online_grads(&gc);
        let v = gc.value(loss).item();
        drop(gc);
        opt.critic.step(&mut critics.online_params_mut(), &grads)?;
        (v, td)
    };

    let eps = standard_normal(&[m, a_dim], rng);
    let (actor_value, log_probs, net_grads, policy_grads) = {
        let (loss, lp) = actor_loss(&mut g, critics, policy, alpha, b_t, eps)?;
        g.backward(loss)?;
        (
            g.value(loss).item(),
            g.value(lp).data().to_vec(),
            net.grads(&g),
            policy.grads(&g),
        )
    };
    drop(g);
    let observer_grad_norm = norm(
        &net.named_params()
            .iter()
            .zip(&net_grads)
            .filter(|((n, _), _)| n.starts_with("obs."))
            .map(|(_, t)| t.clone())
            .collect::<Vec<_>>(),
    );
    let belief_grad_norm = norm(&net_grads);
    opt.belief.step(&mut net.params_mut(), &net_grads)?;
    opt.policy.step(&mut policy.params_mut(), &policy_grads)?;

    let (alpha_value, alpha_grad) = alpha_loss(temp, &log_probs)?;
    opt.alpha
        .step(&mut temp.params_mut(), &[Tensor::scalar(alpha_grad)])?;

    critics.polyak_update(cfg.tau);

    for v in [critic_value, actor_value, alpha_value] {
        if !v.is_finite() {
            return Err(Error::Numeric("non-finite loss in joint update".into()));
        }
    }
    Ok(UpdateReport {
        critic_loss: critic_value,
        actor_loss: actor_value,
        alpha_loss: alpha_value,
        alpha: temp.alpha(),
        mean_q_target,
        td_errors,
        belief_grad_norm,
        observer_grad_norm,
    })
}
