//! Online fine-tuning: environment interaction under dropout, prioritized
//! replay of observation histories, joint actor-critic updates and periodic
//! behavior-cloning anchoring on demonstrations.

mod replay;
mod sumtree;

use std::path::Path;

use rand_chacha::ChaCha8Rng;

pub use replay::{PerParams, ReplayBuffer, Replayed, SampleIndex, Transition};
pub use sumtree::SumTree;

use crate::agent::{joint_update, ActionMode, Agent, Optimizers, TransitionBatch, UpdateConfig};
use crate::belief::MaskedObservation;
use crate::diffmath::{Parameterized, Tensor};
use crate::envs::{DropoutWrapper, Task, TaskKind};
use crate::error::{Error, Result};
use crate::eval::{check_dims, evaluate};
use crate::pretrain::{
    curriculum_p_mask, default_curriculum, window_loss, DemoDataset, WindowBatch,
};
use crate::report::{fmt6, write_lines};
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    pub task: TaskKind,
    pub total_steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    /// Gradient updates per environment step.
    pub utd: f64,
    /// One BC step after every `bc_period` joint updates.
    pub bc_period: usize,
    pub bc_lambda: f64,
    /// Masking schedule for BC batches over the course of fine-tuning.
    pub bc_curriculum: Vec<(f64, f64)>,
    /// Observation probability while collecting experience.
    pub p_obs: f64,
    pub warmup: usize,
    /// History length used to rebuild beliefs for replayed transitions.
    pub window: usize,
    pub truncation: Option<usize>,
    pub capacity: usize,
    pub per: PerParams,
    /// Importance exponent at the start; annealed linearly to 1.
    pub per_beta0: f64,
    /// Evaluate every this many environment steps (0 disables).
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub eval_seeds: Vec<u64>,
    /// Start from a fresh policy head and critics instead of the pretrained head.
    pub reset_policy: bool,
    /// Entropy term inside critic targets (see `UpdateConfig`).
    pub entropy_backup: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            task: TaskKind::Reach,
            total_steps: 100_000,
            lr: 1e-4,
            batch_size: 256,
            gamma: 0.99,
            tau: 0.005,
            utd: 1.0,
            bc_period: 2,
            bc_lambda: 0.1,
            bc_curriculum: default_curriculum(),
            p_obs: 0.5,
            warmup: 500,
            window: 20,
            truncation: None,
            capacity: 100_000,
            per: PerParams::default(),
            per_beta0: 0.4,
            eval_every: 5_000,
            eval_episodes: 10,
            eval_seeds: vec![1000],
            reset_policy: false,
            entropy_backup: false,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.utd > 0.0 && self.utd.is_finite()) {
            return Err(Error::config(format!(
                "UTD ratio must be positive, got {}",
                self.utd
            )));
        }
        if self.bc_period == 0 {
            return Err(Error::config("BC period must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.p_obs) {
            return Err(Error::config(format!(
                "observation probability {} outside [0, 1]",
                self.p_obs
            )));
        }
        if !(self.bc_lambda >= 0.0) || !(0.0..=1.0).contains(&self.tau) || !(self.lr >= 0.0) {
            return Err(Error::config(
                "lambda, tau and learning rate must be non-negative (tau <= 1)",
            ));
        }
        if self.batch_size == 0 || self.window < 2 || self.capacity == 0 {
            return Err(Error::config(
                "batch size, capacity must be positive and window at least 2",
            ));
        }
        if !(0.0..=1.0).contains(&self.per_beta0)
            || !(self.per.alpha >= 0.0)
            || !(self.per.eps > 0.0)
        {
            return Err(Error::config("PER parameters out of range"));
        }
        if self.eval_every > 0 && (self.eval_episodes == 0 || self.eval_seeds.is_empty()) {
            return Err(Error::config(
                "periodic evaluation needs episodes and seeds",
            ));
        }
        if self.truncation == Some(0) {
            return Err(Error::config("truncation length must be positive"));
        }
        let total: f64 = self.bc_curriculum.iter().map(|c| c.0).sum();
        if self.bc_curriculum.is_empty()
            || (total - 1.0).abs() > 1e-9
            || self
                .bc_curriculum
                .iter()
                .any(|&(f, p)| !(f > 0.0) || !(0.0..=1.0).contains(&p))
        {
            return Err(Error::config(
                "BC masking curriculum must partition training with p in [0, 1]",
            ));
        }
        Ok(())
    }

    pub fn per_beta(&self, env_step: usize) -> f64 {
        let frac = (env_step as f64 / self.total_steps.max(1) as f64).min(1.0);
        self.per_beta0 + (1.0 - self.per_beta0) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRow {
    pub env_step: usize,
    pub eval_success: f64,
    pub eval_return: f64,
    /// Means over the updates since the previous row.
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainCurve {
    pub rows: Vec<TrainRow>,
}

impl TrainCurve {
    pub const HEADER: &'static str =
        "env_step,eval_success,eval_return,critic_loss,actor_loss,alpha";

    pub fn to_lines(&self) -> Vec<String> {
        let mut out = vec![Self::HEADER.to_string()];
        out.extend(self.rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.env_step,
                fmt6(r.eval_success),
                fmt6(r.eval_return),
                fmt6(r.critic_loss),
                fmt6(r.actor_loss),
                fmt6(r.alpha)
            )
        }));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_lines(path, &self.to_lines())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub env_steps: usize,
    pub episodes: usize,
    pub joint_updates: usize,
    pub bc_updates: usize,
    pub stale_priority_updates: usize,
    pub clipped_actions: usize,
}

pub struct FinetuneOutput {
    pub agent: Agent,
    pub curve: TrainCurve,
    pub counters: Counters,
    /// Optimizer states at the end of the run.
    pub opt: Optimizers,
}

struct Running {
    critic: f64,
    actor: f64,
    n: usize,
}

/// Replayed transitions as encoder inputs under the agent's normalization.
fn build_batch(
    agent: &Agent,
    buffer: &ReplayBuffer,
    idx: &[SampleIndex],
    weights: Vec<f64>,
    window: usize,
) -> Result<TransitionBatch> {
    let a_dim = agent.action_dim();
    let mut windows = Vec::with_capacity(idx.len());
    let mut actions = Vec::with_capacity(idx.len() * a_dim);
    let mut rewards = Vec::with_capacity(idx.len());
    let mut dones = Vec::with_capacity(idx.len());
    for i in idx {
        let r = buffer.replay(i.slot, window);
        let norm = agent.normalizer(r.task);
        let w: Vec<Vec<f64>> = r
            .history
            .iter()
            .map(|(raw, mask)| {
                if *mask {
                    norm.apply(raw, agent.obs_width())
                } else {
                    vec![0.0; agent.obs_width()]
                }
            })
            .collect();
        windows.push(w);
        actions.extend_from_slice(&r.action);
        rewards.push(r.reward);
        dones.push(r.done);
    }
    Ok(TransitionBatch {
        windows,
        actions: Tensor::new(&[idx.len(), a_dim], actions)?,
        rewards,
        dones,
        weights,
    })
}

/// Fine-tunes `agent` on `task`. With `demos`, every `bc_period`-th joint
/// update is followed by one BC step (plus `bc_lambda`-weighted
/// reconstruction) on demonstration windows.
pub fn run_finetuning(
    mut agent: Agent,
    task: &Task,
    demos: Option<&DemoDataset>,
    config: &FinetuneConfig,
    seed: u64,
) -> Result<FinetuneOutput> {
    config.validate()?;
    check_dims(&agent, task)?;
    if task.kind() != config.task {
        return Err(Error::config(format!(
            "config names task {} but {} was given",
            config.task,
            task.kind()
        )));
    }
    let demos = match demos {
        Some(d) => Some(
            d.clone()
                .aligned_to(&agent.normalizers, agent.obs_width())?,
        ),
        None => None,
    };
    if let Some(d) = &demos {
        if d.action_dim != agent.action_dim() {
            return Err(Error::dim(
                "demo actions",
                &[d.action_dim],
                &[agent.action_dim()],
            ));
        }
    }
    let mut counters = Counters::default();
    let mut curve = TrainCurve::default();
    if config.total_steps == 0 {
        let opt = Optimizers::new(&agent, config.lr);
        return Ok(FinetuneOutput {
            agent,
            curve,
            counters,
            opt,
        });
    }
    if config.reset_policy {
        agent.reset_heads(derive_seed(seed, 30))?;
    }
    let truncation = config.truncation.or(agent.variant.bptt_truncation());
    let mut opt = Optimizers::new(&agent, config.lr);
    let ucfg = UpdateConfig {
        gamma: config.gamma,
        tau: config.tau,
        truncate: truncation,
        entropy_backup: config.entropy_backup,
    };
    let mut buffer = ReplayBuffer::new(config.capacity, config.per)?;
    let norm = agent.normalizer(task.kind());

    let env_seed = derive_seed(seed, 20);
    let mut wrapper = DropoutWrapper::new(config.p_obs, derive_seed(seed, 21))?;
    let mut act_rng: ChaCha8Rng = rng_for(seed, 22);
    let mut replay_rng: ChaCha8Rng = rng_for(seed, 23);
    let mut update_rng: ChaCha8Rng = rng_for(seed, 24);
    let mut bc_rng: ChaCha8Rng = rng_for(seed, 25);

    let mut state = task.reset(derive_seed(env_seed, 0));
    let mut obs: MaskedObservation = wrapper.observe(task, &state);
    let mut belief = agent.initial_state();
    let mut credit = 0.0;
    let mut running = Running {
        critic: 0.0,
        actor: 0.0,
        n: 0,
    };

    while counters.env_steps < config.total_steps {
        let (next_belief, policy_action) =
            agent.step(&norm, &belief, &obs, ActionMode::Stochastic, &mut act_rng)?;
        belief = next_belief;
        let action = if counters.env_steps < config.warmup {
            agent.random_action(&mut act_rng)
        } else {
            policy_action
        };
        let out = task.step(&state, &action);
        counters.clipped_actions += out.clipped as usize;
        let next_obs = wrapper.observe(task, &out.state);
        buffer.store(Transition {
            task: task.kind(),
            episode: counters.episodes as u64,
            t: state.t,
            obs: obs.raw.clone(),
            mask: obs.mask,
            action,
            reward: out.reward,
            next_obs: next_obs.raw.clone(),
            next_mask: next_obs.mask,
            // only success is terminal; the time limit still bootstraps
            done: out.success,
        })?;
        counters.env_steps += 1;

        if out.done {
            counters.episodes += 1;
            state = task.reset(derive_seed(env_seed, counters.episodes as u64));
            obs = wrapper.observe(task, &state);
            belief = agent.initial_state();
        } else {
            state = out.state;
            obs = next_obs;
        }

        if counters.env_steps > config.warmup {
            credit += config.utd;
        }
        while credit >= 1.0 && buffer.len() >= config.batch_size {
            credit -= 1.0;
            let beta = config.per_beta(counters.env_steps);
            let (idx, weights) = buffer.sample(config.batch_size, beta, &mut replay_rng)?;
            let batch = build_batch(&agent, &buffer, &idx, weights, config.window)?;
            let rep = joint_update(&mut agent, &batch, &mut opt, &ucfg, &mut update_rng)?;
            buffer.update_priorities(&idx, &rep.td_errors)?;
            counters.joint_updates += 1;
            running.critic += rep.critic_loss;
            running.actor += rep.actor_loss;
            running.n += 1;

            if counters.joint_updates % config.bc_period == 0 {
                if let Some(d) = &demos {
                    let frac = counters.env_steps as f64 / config.total_steps as f64;
                    let p_mask = curriculum_p_mask(&config.bc_curriculum, frac);
                    let wb = WindowBatch::sample(
                        d,
                        config.batch_size,
                        config.window,
                        p_mask,
                        &mut bc_rng,
                    );
                    let l = window_loss(&agent, &wb, config.bc_lambda, truncation)?;
                    if !l.total.is_finite() {
                        return Err(Error::Numeric(
                            "non-finite BC loss during fine-tuning".into(),
                        ));
                    }
                    opt.belief.step(&mut agent.net.params_mut(), &l.grads_net)?;
                    opt.policy
                        .step(&mut agent.policy.params_mut(), &l.grads_policy)?;
                    if config.bc_lambda > 0.0 {
                        opt.decoder
                            .step(&mut agent.decoder.params_mut(), &l.grads_decoder)?;
                    }
                    counters.bc_updates += 1;
                }
            }
        }
        // leftover credit from an underfull buffer is not banked
        credit = credit.min(1.0);

        if config.eval_every > 0 && counters.env_steps % config.eval_every == 0 {
            let r = evaluate(
                &agent,
                task,
                config.p_obs,
                config.eval_episodes,
                &config.eval_seeds,
            )?;
            let n = running.n.max(1) as f64;
            let nan_if_empty = |v: f64| if running.n == 0 { f64::NAN } else { v / n };
            curve.rows.push(TrainRow {
                env_step: counters.env_steps,
                eval_success: r.success_rate,
                eval_return: r.mean_return,
                critic_loss: nan_if_empty(running.critic),
                actor_loss: nan_if_empty(running.actor),
                alpha: agent.temp.alpha(),
            });
            running = Running {
                critic: 0.0,
                actor: 0.0,
                n: 0,
            };
        }
    }
    counters.stale_priority_updates = buffer.stale_updates;
    Ok(FinetuneOutput {
        agent,
        curve,
        counters,
        opt,
    })
}
