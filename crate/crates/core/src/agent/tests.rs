use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diffmath::{Graph, Linear, Mlp, Parameterized, Tensor};
use crate::testutil::fd_max_rel_err;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 1-D policy whose output is the constant `[μ, log σ]`.
fn constant_policy(b_dim: usize, mu: f64, log_std: f64) -> PolicyParams {
    let mut p = PolicyParams::new(b_dim, 4, 1, &mut rng(0));
    let last = p.mlp.layers.last_mut().unwrap();
    *last = Linear::zeros(4, 2);
    last.b = Tensor::vector(vec![mu, log_std]);
    p
}

/// Critic network returning a constant.
fn constant_critic(in_dim: usize, value: f64) -> Mlp {
    let mut m = Mlp::new(&[in_dim, 4, 4, 1], false, &mut rng(1));
    let last = m.layers.last_mut().unwrap();
    *last = Linear::zeros(4, 1);
    last.b = Tensor::vector(vec![value]);
    m
}

fn ensemble_of(values: &[f64], in_dim: usize) -> CriticEnsemble {
    let nets: Vec<Mlp> = values.iter().map(|&v| constant_critic(in_dim, v)).collect();
    CriticEnsemble {
        online: nets.clone(),
        target: nets,
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

#[test]
fn deterministic_zero_mean_gives_zero_action() {
    let p = constant_policy(3, 0.0, 0.3);
    let (a, lp) = sample_action(
        &p,
        &Tensor::vector(vec![0.2, -0.4, 1.0]),
        ActionMode::Deterministic,
        &mut rng(2),
    )
    .unwrap();
    assert_eq!(a, vec![0.0]);
    assert!(lp.is_none());
}

#[test]
fn stochastic_samples_stay_inside_box() {
    let p = PolicyParams::new(3, 8, 2, &mut rng(3));
    let mut r = rng(4);
    for _ in 0..2000 {
        let b = Tensor::vector((0..3).map(|_| r.random_range(-2.0..2.0)).collect());
        let (a, lp) = sample_action(&p, &b, ActionMode::Stochastic, &mut r).unwrap();
        assert!(a.iter().all(|v| v.abs() < 1.0));
        assert!(lp.unwrap().is_finite());
    }
    let bad = Tensor::vector(vec![f64::NAN, 0.0, 0.0]);
    assert!(matches!(
        sample_action(&p, &bad, ActionMode::Stochastic, &mut r),
        Err(crate::Error::Numeric(_))
    ));
}

#[test]
fn squashed_log_prob_matches_cdf_derivative() {
    for &(mu, ls) in &[(0.0, 0.0), (0.7, -0.5), (-1.2, 0.4)] {
        let p = constant_policy(2, mu, ls);
        let sigma = f64::exp(ls);
        let cdf = |a: f64| std_normal_cdf((a.atanh() - mu) / sigma);
        let mut g = Graph::no_grad();
        let b = g.constant(Tensor::zeros(&[1, 2]));
        for k in 1..40 {
            let a = -0.975 + 0.05 * k as f64;
            let h = 1e-6;
            let numeric = (cdf(a + h) - cdf(a - h)) / (2.0 * h);
            let (lp, clamped) = p
                .log_prob_of(&mut g, b, &Tensor::from_rows(&[[a]]).unwrap())
                .unwrap();
            assert_eq!(clamped, 0);
            let dens = g.value(lp).item().exp();
            assert!(
                (dens - numeric).abs() < 1e-6 * numeric.max(1.0),
                "{a}: {dens} vs {numeric}"
            );
        }
        // the reparameterized path reports the same density
        let eps = 0.37;
        let s = p
            .sample_with_noise(&mut g, b, Tensor::from_rows(&[[eps]]).unwrap())
            .unwrap();
        let a = g.value(s.action).item();
        let (lp, _) = p
            .log_prob_of(&mut g, b, &Tensor::from_rows(&[[a]]).unwrap())
            .unwrap();
        assert!((g.value(s.log_prob).item() - g.value(lp).item()).abs() < 1e-8);
    }
}

#[test]
fn squashed_density_integrates_to_one() {
    let p = constant_policy(1, 0.4, -0.2);
    let n = 20000;
    let mut g = Graph::no_grad();
    let rows: Vec<[f64; 1]> = (0..n)
        .map(|i| [-1.0 + (i as f64 + 0.5) * 2.0 / n as f64])
        .collect();
    let bs = g.constant(Tensor::zeros(&[n, 1]));
    let (lp, _) = p
        .log_prob_of(&mut g, bs, &Tensor::from_rows(&rows).unwrap())
        .unwrap();
    let total: f64 = g
        .value(lp)
        .data()
        .iter()
        .map(|l| l.exp() * 2.0 / n as f64)
        .sum();
    assert!((total - 1.0).abs() < 1e-3, "{total}");
}

#[test]
fn critic_target_examples() {
    let ens = ensemble_of(&[1.2, 0.8], 3);
    let p = constant_policy(2, 0.1, -1.0);
    let b = Tensor::vector(vec![0.5, -0.5]);
    let mut r = rng(5);
    assert_eq!(
        critic_target(&ens, &p, 0.7, &b, 0.0, false, 0.3, &mut r).unwrap(),
        0.7
    );
    assert_eq!(
        critic_target(&ens, &p, 1.0, &b, 0.99, true, 0.3, &mut r).unwrap(),
        1.0
    );
    let y = critic_target(&ens, &p, 1.0, &b, 0.99, false, 0.0, &mut r).unwrap();
    assert!((y - 1.792).abs() < 1e-12);
    assert!(critic_target(&ens, &p, 1.0, &b, 1.5, false, 0.0, &mut r).is_err());
}

#[test]
fn target_never_exceeds_single_member_targets() {
    let p = PolicyParams::new(3, 8, 2, &mut rng(6));
    let ens = CriticEnsemble::new(3, 3, 2, 8, &mut rng(7)).unwrap();
    let mut r = rng(8);
    let b = Tensor::new(
        &[16, 3],
        (0..48).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let eps = standard_normal(&[16, 2], &mut r);
    let rewards = vec![0.5; 16];
    let dones = vec![false; 16];
    let y = critic_targets(&ens, &p, &rewards, &b, 0.99, &dones, 0.2, eps.clone()).unwrap();
    for k in 0..3 {
        let single = CriticEnsemble {
            online: vec![ens.online[k].clone()],
            target: vec![ens.target[k].clone()],
        };
        let yk = critic_targets(&single, &p, &rewards, &b, 0.99, &dones, 0.2, eps.clone()).unwrap();
        assert!(y.iter().zip(&yk).all(|(a, b)| a <= b));
    }
}

#[test]
fn critic_loss_examples_and_detachment() {
    let ens = ensemble_of(&[2.0], 2);
    let mut g = Graph::new();
    let b = g.constant(Tensor::zeros(&[1, 1]));
    let a = g.constant(Tensor::zeros(&[1, 1]));
    let (l, td) = critic_loss(&mut g, &ens, b, a, &[3.0], None).unwrap();
    assert_eq!(g.value(l).item(), 1.0);
    assert_eq!(td, vec![1.0]);
    let (l0, _) = critic_loss(&mut g, &ens, b, a, &[2.0], None).unwrap();
    assert_eq!(g.value(l0).item(), 0.0);
    assert!(critic_loss(&mut g, &ens, b, a, &[], None).is_err());

    let ens = CriticEnsemble::new(2, 3, 2, 8, &mut rng(9)).unwrap();
    let mut g = Graph::new();
    let b = g.constant(Tensor::new(&[4, 3], vec![0.1; 12]).unwrap());
    let a = g.constant(Tensor::new(&[4, 2], vec![-0.2; 8]).unwrap());
    let (l, _) = critic_loss(&mut g, &ens, b, a, &[1.0, 0.0, -1.0, 2.0], None).unwrap();
    g.backward(l).unwrap();
    assert!(ens.online_grads(&g).iter().any(|t| t.norm() > 0.0));
    assert!(ens.target_grads(&g).iter().all(|t| t.norm() == 0.0));
}

#[test]
fn critic_gradients_match_finite_differences() {
    let ens = CriticEnsemble::new(2, 3, 2, 6, &mut rng(10)).unwrap();
    let mut r = rng(11);
    let b = Tensor::new(
        &[5, 3],
        (0..15).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let a = Tensor::new(
        &[5, 2],
        (0..10).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let y = vec![0.3, -0.2, 1.0, 0.0, 0.5];
    let w = vec![1.0, 0.5, 0.8, 1.0, 0.2];
    let f = |e: &CriticEnsemble| {
        let mut g = Graph::new();
        let bv = g.constant(b.clone());
        let av = g.constant(a.clone());
        let (l, _) = critic_loss(&mut g, e, bv, av, &y, Some(&w)).unwrap();
        g.backward(l).unwrap();
        (g.value(l).item(), e.grads(&g))
    };
    let (_, grads) = f(&ens);
    assert!(fd_max_rel_err(&ens, &grads, 15, |e| f(e).0) < 1e-4);
}

#[test]
fn actor_loss_with_constant_critics() {
    let ens = ensemble_of(&[1.5, 2.5], 4);
    let p = PolicyParams::new(2, 8, 2, &mut rng(12));
    let mut r = rng(13);
    let b = Tensor::new(
        &[6, 2],
        (0..12).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let eps = standard_normal(&[6, 2], &mut r);
    let mut g = Graph::new();
    let bv = g.constant(b.clone());
    let (l, _) = actor_loss(&mut g, &ens, &p, 0.0, bv, eps.clone()).unwrap();
    assert!((g.value(l).item() + 2.0).abs() < 1e-12);
    g.backward(l).unwrap();
    assert!(p.grads(&g).iter().all(|t| t.norm() == 0.0));

    // linear in α with slope mean(log π)
    let loss_at = |alpha: f64| {
        let mut g = Graph::new();
        let bv = g.constant(b.clone());
        let (l, lp) = actor_loss(&mut g, &ens, &p, alpha, bv, eps.clone()).unwrap();
        let mlp = g.value(lp).data().iter().sum::<f64>() / 6.0;
        (g.value(l).item(), mlp)
    };
    let (l1, mlp) = loss_at(0.1);
    let (l2, _) = loss_at(0.6);
    assert!(((l2 - l1) - 0.5 * mlp).abs() < 1e-12);
    if mlp > 0.0 {
        assert!(l2 > l1);
    }
}

#[test]
fn actor_gradients_match_finite_differences() {
    let ens = CriticEnsemble::new(2, 3, 2, 6, &mut rng(14)).unwrap();
    let p = PolicyParams::new(3, 6, 2, &mut rng(15));
    let mut r = rng(16);
    let b = Tensor::new(
        &[5, 3],
        (0..15).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let eps = standard_normal(&[5, 2], &mut r);
    let f = |pp: &PolicyParams| {
        let mut g = Graph::new();
        let bv = g.constant(b.clone());
        let (l, _) = actor_loss(&mut g, &ens, pp, 0.2, bv, eps.clone()).unwrap();
        g.backward(l).unwrap();
        (g.value(l).item(), pp.grads(&g))
    };
    let (_, grads) = f(&p);
    assert!(fd_max_rel_err(&p, &grads, 15, |pp| f(pp).0) < 1e-4);
}

#[test]
fn alpha_loss_fixed_point_and_sign() {
    let t = EntropyTemperature::new(0.1, 2);
    let (_, grad) = alpha_loss(&t, &[2.0, 2.0]).unwrap();
    assert_eq!(grad, 0.0);
    // log π above −H̄ means entropy too low; descent raises log α
    let (_, grad) = alpha_loss(&t, &[5.0, 4.0]).unwrap();
    assert!(grad < 0.0);
    assert!(alpha_loss(&t, &[]).is_err());
}

#[test]
fn alpha_stays_positive() {
    let mut t = EntropyTemperature::new(0.1, 2);
    let mut opt = crate::diffmath::AdamState::for_params(0.05, &t.params());
    let mut r = rng(17);
    for _ in 0..10_000 {
        let lps: Vec<f64> = (0..4).map(|_| r.random_range(-10.0..10.0)).collect();
        let (_, grad) = alpha_loss(&t, &lps).unwrap();
        opt.step(&mut t.params_mut(), &[Tensor::scalar(grad)])
            .unwrap();
        assert!(t.alpha() > 0.0);
    }
}

fn toy_batch(agent: &Agent, m: usize, seed: u64) -> TransitionBatch {
    let mut r = rng(seed);
    let w = agent.obs_width();
    let windows = (0..m)
        .map(|_| {
            let len = r.random_range(2..8);
            (0..len)
                .map(|_| {
                    if r.random_bool(0.3) {
                        vec![0.0; w]
                    } else {
                        (0..w).map(|_| r.random_range(-1.0..1.0)).collect()
                    }
                })
                .collect()
        })
        .collect();
    TransitionBatch {
        windows,
        actions: Tensor::new(
            &[m, 2],
            (0..2 * m).map(|_| r.random_range(-0.9..0.9)).collect(),
        )
        .unwrap(),
        rewards: (0..m)
            .map(|_| if r.random_bool(0.2) { 1.0 } else { 0.0 })
            .collect(),
        dones: (0..m).map(|_| r.random_bool(0.1)).collect(),
        weights: vec![1.0; m],
    }
}

fn small_dims() -> ModelDims {
    ModelDims {
        width: 8,
        head_hidden: 8,
        n_critics: 2,
    }
}

#[test]
fn frozen_encoder_stays_put_while_policy_moves() {
    let mut agent = Agent::new(Variant::Ssm, 4, 2, small_dims(), 1).unwrap();
    let mut opt = Optimizers::new(&agent, 1e-3);
    opt.belief.lr = 0.0;
    let before = agent.clone();
    let batch = toy_batch(&agent, 16, 2);
    let rep = joint_update(
        &mut agent,
        &batch,
        &mut opt,
        &UpdateConfig::default(),
        &mut rng(3),
    )
    .unwrap();
    assert_eq!(agent.net, before.net);
    assert_ne!(agent.policy, before.policy);
    assert_ne!(agent.critics.online, before.critics.online);
    assert_ne!(agent.critics.target, before.critics.target);
    assert!(rep.observer_grad_norm > 0.0);
    assert_eq!(rep.td_errors.len(), 16);
}

#[test]
fn actor_step_moves_encoder_and_observer() {
    for variant in [Variant::Ssm, Variant::Lstm] {
        let mut agent = Agent::new(variant, 4, 2, small_dims(), 4).unwrap();
        let mut opt = Optimizers::new(&agent, 1e-3);
        let before = agent.net.clone();
        let batch = toy_batch(&agent, 16, 5);
        let rep = joint_update(
            &mut agent,
            &batch,
            &mut opt,
            &UpdateConfig::default(),
            &mut rng(6),
        )
        .unwrap();
        assert!(rep.observer_grad_norm > 1e-8, "{}", rep.observer_grad_norm);
        let moved = agent
            .net
            .params()
            .iter()
            .zip(before.params())
            .filter(|(a, b)| a.max_abs_diff(b) > 0.0)
            .count();
        assert_eq!(moved, agent.net.params().len());
    }
}

#[test]
fn joint_update_is_deterministic() {
    let run = || {
        let mut agent = Agent::new(Variant::Lstm, 4, 2, small_dims(), 7).unwrap();
        let mut opt = Optimizers::new(&agent, 1e-3);
        let mut r = rng(8);
        let reps: Vec<UpdateReport> = (0..3)
            .map(|i| {
                let batch = toy_batch(&agent, 8, 100 + i);
                joint_update(
                    &mut agent,
                    &batch,
                    &mut opt,
                    &UpdateConfig::default(),
                    &mut r,
                )
                .unwrap()
            })
            .collect();
        (reps, agent)
    };
    let (a, agent_a) = run();
    let (b, agent_b) = run();
    assert_eq!(a, b);
    assert_eq!(agent_a, agent_b);
}

#[test]
fn memoryless_agents_update() {
    for variant in [Variant::Memoryless, Variant::MemorylessMlp] {
        let mut agent = Agent::new(variant, 4, 2, small_dims(), 9).unwrap();
        let mut opt = Optimizers::new(&agent, 1e-3);
        let batch = toy_batch(&agent, 8, 10);
        let rep = joint_update(
            &mut agent,
            &batch,
            &mut opt,
            &UpdateConfig::default(),
            &mut rng(11),
        )
        .unwrap();
        assert_eq!(rep.observer_grad_norm, 0.0);
        assert!(rep.critic_loss.is_finite());
    }
}

#[test]
fn entropy_backup_switch_drops_temperature_from_targets() {
    let target_at = |alpha: f64, entropy_backup: bool| {
        let mut agent = Agent::new(Variant::Lstm, 4, 2, small_dims(), 12).unwrap();
        agent.temp.log_alpha = Tensor::scalar(alpha.ln());
        let mut opt = Optimizers::new(&agent, 1e-3);
        let batch = toy_batch(&agent, 8, 13);
        let cfg = UpdateConfig {
            entropy_backup,
            ..UpdateConfig::default()
        };
        joint_update(&mut agent, &batch, &mut opt, &cfg, &mut rng(14))
            .unwrap()
            .mean_q_target
    };
    assert_eq!(target_at(0.1, false), target_at(2.0, false));
    assert_ne!(target_at(0.1, true), target_at(2.0, true));
}
