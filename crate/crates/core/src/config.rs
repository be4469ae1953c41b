//! Run configuration: one flat TOML document covering model size,
//! pretraining, fine-tuning and sweep settings. Missing keys take the
//! full-size defaults; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::ModelDims;
use crate::envs::TaskKind;
use crate::error::{Error, Result};
use crate::eval::parse_grid;
use crate::finetune::{FinetuneConfig, PerParams};
use crate::pretrain::{default_curriculum, PretrainConfig};
use crate::variant::Variant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub width: usize,
    pub head_hidden: usize,
    pub n_critics: usize,

    /// Reconstruction weight; variants without reconstruction force 0.
    pub lambda: f64,
    /// `[fraction, masking probability]` stages.
    pub curriculum: Vec<[f64; 2]>,
    pub iterations: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_lr: f64,
    pub window: usize,
    /// BPTT truncation; 0 keeps the variant's own setting.
    pub truncation: usize,

    pub steps: usize,
    pub finetune_lr: f64,
    pub finetune_batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub utd: f64,
    pub bc_period: usize,
    pub bc_lambda: f64,
    pub bc_curriculum: Vec<[f64; 2]>,
    pub p_obs: f64,
    pub warmup: usize,
    pub replay_window: usize,
    pub capacity: usize,
    pub per_alpha: f64,
    pub per_eps: f64,
    pub per_beta0: f64,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub eval_seeds: Vec<u64>,
    pub reset_policy: bool,
    pub entropy_backup: bool,

    pub p_grid: String,
    pub sweep_episodes: usize,
    pub sweep_seeds: usize,
}

impl Default for Config {
    fn default() -> Self {
        let dims = ModelDims::default();
        let pre = PretrainConfig::default();
        let ft = FinetuneConfig::default();
        let stages = |c: Vec<(f64, f64)>| c.into_iter().map(|(f, p)| [f, p]).collect();
        Config {
            width: dims.width,
            head_hidden: dims.head_hidden,
            n_critics: dims.n_critics,
            lambda: pre.lambda,
            curriculum: stages(default_curriculum()),
            iterations: pre.iterations,
            pretrain_batch_size: pre.batch_size,
            pretrain_lr: pre.lr,
            window: pre.window,
            truncation: 0,
            steps: ft.total_steps,
            finetune_lr: ft.lr,
            finetune_batch_size: ft.batch_size,
            gamma: ft.gamma,
            tau: ft.tau,
            utd: ft.utd,
            bc_period: ft.bc_period,
            bc_lambda: ft.bc_lambda,
            bc_curriculum: stages(ft.bc_curriculum),
            p_obs: ft.p_obs,
            warmup: ft.warmup,
            replay_window: ft.window,
            capacity: ft.capacity,
            per_alpha: ft.per.alpha,
            per_eps: ft.per.eps,
            per_beta0: ft.per_beta0,
            eval_every: ft.eval_every,
            eval_episodes: ft.eval_episodes,
            eval_seeds: ft.eval_seeds,
            reset_policy: ft.reset_policy,
            entropy_backup: ft.entropy_backup,
            p_grid: "0.5:1.0:0.05".into(),
            sweep_episodes: 100,
            sweep_seeds: 3,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            width: self.width,
            head_hidden: self.head_hidden,
            n_critics: self.n_critics,
        }
    }

    pub fn pretrain_config(&self, variant: Variant) -> PretrainConfig {
        let mut c = PretrainConfig {
            variant,
            lambda: self.lambda,
            curriculum: self.curriculum.iter().map(|s| (s[0], s[1])).collect(),
            iterations: self.iterations,
            batch_size: self.pretrain_batch_size,
            lr: self.pretrain_lr,
            truncation: None,
            window: self.window,
            dims: self.dims(),
        };
        c.apply_variant(variant);
        if self.truncation > 0 {
            c.truncation = Some(self.truncation);
        }
        c
    }

    pub fn finetune_config(&self, task: TaskKind) -> FinetuneConfig {
        FinetuneConfig {
            task,
            total_steps: self.steps,
            lr: self.finetune_lr,
            batch_size: self.finetune_batch_size,
            gamma: self.gamma,
            tau: self.tau,
            utd: self.utd,
            bc_period: self.bc_period,
            bc_lambda: self.bc_lambda,
            bc_curriculum: self.bc_curriculum.iter().map(|s| (s[0], s[1])).collect(),
            p_obs: self.p_obs,
            warmup: self.warmup,
            window: self.replay_window,
            truncation: (self.truncation > 0).then_some(self.truncation),
            capacity: self.capacity,
            per: PerParams {
                alpha: self.per_alpha,
                eps: self.per_eps,
            },
            per_beta0: self.per_beta0,
            eval_every: self.eval_every,
            eval_episodes: self.eval_episodes,
            eval_seeds: self.eval_seeds.clone(),
            reset_policy: self.reset_policy,
            entropy_backup: self.entropy_backup,
        }
    }

    /// Runs every downstream validation so a bad value fails before any work.
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.head_hidden == 0 || self.n_critics == 0 {
            return Err(Error::config(
                "width, head_hidden and n_critics must be positive",
            ));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations must be positive"));
        }
        self.pretrain_config(Variant::Lstm).validate()?;
        self.finetune_config(TaskKind::Reach).validate()?;
        parse_grid(&self.p_grid)?;
        if self.sweep_episodes == 0 || self.sweep_seeds == 0 {
            return Err(Error::config(
                "sweep_episodes and sweep_seeds must be positive",
            ));
        }
        Ok(())
    }
}
