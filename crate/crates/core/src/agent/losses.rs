use rand::Rng;

use super::critic::{CriticEnsemble, EntropyTemperature};
use super::policy::{standard_normal, PolicyParams};
use crate::diffmath::{Graph, Tensor, Var};
use crate::error::{Error, Result};

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::config(format!("discount {gamma} outside [0, 1]")));
    }
    Ok(())
}

/// Bootstrapped targets for a batch:
/// `y = r + (1 − done)·γ·[min_k Q'_k(b', a') − α·log π(a'|b')]`, `a' ~ π(·|b')`
/// drawn with the supplied noise.
#[allow(clippy::too_many_arguments)]
pub fn critic_targets(
    ens: &CriticEnsemble,
    policy: &PolicyParams,
    rewards: &[f64],
    b_next: &Tensor,
    gamma: f64,
    dones: &[bool],
    alpha: f64,
    eps: Tensor,
) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let m = rewards.len();
    if dones.len() != m || b_next.rows() != m {
        return Err(Error::dim(
            "critic_target",
            &[m, dones.len()],
            b_next.shape(),
        ));
    }
    let mut g = Graph::no_grad();
    let b = g.constant(b_next.clone());
    let s = policy.sample_with_noise(&mut g, b, eps)?;
    let qs = ens.q_target(&mut g, b, s.action)?;
    let lp = g.value(s.log_prob).data().to_vec();
    let qv: Vec<&[f64]> = qs.iter().map(|&q| g.value(q).data()).collect();
    Ok((0..m)
        .map(|i| {
            let qmin = qv.iter().map(|q| q[i]).fold(f64::INFINITY, f64::min);
            let cont = if dones[i] { 0.0 } else { 1.0 };
            rewards[i] + cont * gamma * (qmin - alpha * lp[i])
        })
        .collect())
}

/// Single-transition target with freshly drawn noise.
#[allow(clippy::too_many_arguments)]
pub fn critic_target<R: Rng + ?Sized>(
    ens: &CriticEnsemble,
    policy: &PolicyParams,
    r: f64,
    b_next: &Tensor,
    gamma: f64,
    done: bool,
    alpha: f64,
    rng: &mut R,
) -> Result<f64> {
    let eps = standard_normal(&[1, policy.action_dim], rng);
    let b = b_next.clone().reshape(&[1, b_next.len()])?;
    Ok(critic_targets(ens, policy, &[r], &b, gamma, &[done], alpha, eps)?[0])
}

/// `(1/N)·Σ_k mean_i w_i·(Q_k(b_i, a_i) − y_i)²` plus per-row TD magnitudes
/// `mean_k |Q_k − y|`. Targets enter as constants.
pub fn critic_loss<'a>(
    g: &mut Graph<'a>,
    ens: &'a CriticEnsemble,
    b: Var,
    a: Var,
    targets: &[f64],
    weights: Option<&[f64]>,
) -> Result<(Var, Vec<f64>)> {
    let m = targets.len();
    if m == 0 {
        return Err(Error::contract("critic_loss on an empty batch"));
    }
    let y = g.constant(Tensor::vector(targets.to_vec()));
    let w = weights.map(|w| g.constant(Tensor::vector(w.to_vec())));
    let qs = ens.q_online(g, b, a)?;
    let n = qs.len() as f64;
    let mut td = vec![0.0; m];
    let mut total: Option<Var> = None;
    for q in qs {
        for (i, (qi, yi)) in g.value(q).data().iter().zip(targets).enumerate() {
            td[i] += (qi - yi).abs() / n;
        }
        let d = g.sub(q, y)?;
        let mut sq = g.square(d);
        if let Some(w) = w {
            sq = g.mul(sq, w)?;
        }
        let l = g.mean(sq);
        total = Some(match total {
            None => l,
            Some(t) => g.add(t, l)?,
        });
    }
    let loss = g.scale(total.expect("ensemble is non-empty"), 1.0 / n);
    Ok((loss, td))
}

/// `mean_i [α·log π(a_i|b_i) − (1/N)·Σ_k Q_k(b_i, a_i)]` with a reparameterized
/// sample. Returns the loss and the per-row log-probabilities.
///
/// The critics read a detached copy of `b`, so gradients reach the belief
/// network only through the policy. Otherwise the encoder can raise the
/// objective by steering beliefs into regions the critics overvalue.
pub fn actor_loss<'a>(
    g: &mut Graph<'a>,
    ens: &'a CriticEnsemble,
    policy: &'a PolicyParams,
    alpha: f64,
    b: Var,
    eps: Tensor,
) -> Result<(Var, Var)> {
    if g.shape(b)[0] == 0 {
        return Err(Error::contract("actor_loss on an empty batch"));
    }
    let s = policy.sample_with_noise(g, b, eps)?;
    let b_critic = g.detach(b);
    let qs = ens.q_online(g, b_critic, s.action)?;
    let n = qs.len() as f64;
    let mut qsum = qs[0];
    for &q in &qs[1..] {
        qsum = g.add(qsum, q)?;
    }
    let qmean = g.scale(qsum, 1.0 / n);
    let ent = g.scale(s.log_prob, alpha);
    let per = g.sub(ent, qmean)?;
    Ok((g.mean(per), s.log_prob))
}

/// Dual temperature loss `mean(−log α·(log π + H̄))` and its derivative with
/// respect to `log α`.
pub fn alpha_loss(temp: &EntropyTemperature, log_probs: &[f64]) -> Result<(f64, f64)> {
    if log_probs.is_empty() {
        return Err(Error::contract("alpha_loss on an empty batch"));
    }
    let mut g = Graph::new();
    let la = g.param(&temp.log_alpha);
    let shifted: Vec<f64> = log_probs.iter().map(|l| l + temp.target_entropy).collect();
    let c = g.constant(Tensor::vector(shifted));
    let prod = g.mul(c, la)?;
    let m = g.mean(prod);
    let loss = g.neg(m);
    g.backward(loss)?;
    let grad = g
        .param_grad(&temp.log_alpha)
        .map(|t| t.item())
        .unwrap_or(0.0);
    Ok((g.value(loss).item(), grad))
}
