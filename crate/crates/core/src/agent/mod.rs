//! Policy, critic ensemble, temperature, and the soft actor-critic losses.

mod critic;
mod losses;
mod policy;
mod update;

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use critic::{CriticEnsemble, EntropyTemperature};
pub use losses::{actor_loss, alpha_loss, critic_loss, critic_target, critic_targets};
pub use policy::{
    sample_action, standard_normal, ActionMode, PolicyParams, PolicySample, ACTION_EDGE,
    LOG_STD_MAX, LOG_STD_MIN,
};
pub use update::{joint_update, Optimizers, TransitionBatch, UpdateConfig, UpdateReport};

use crate::belief::{
    BeliefDims, BeliefNet, BeliefState, DecoderParams, MaskedObservation, ObsNormalizer,
};
use crate::diffmath::{prefixed, Parameterized, Tensor};
use crate::envs::TaskKind;
use crate::error::Result;
use crate::seed::rng_for;
use crate::variant::Variant;

/// Network widths. The defaults are the full-size model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Encoder, observer and belief width.
    pub width: usize,
    /// Hidden width of the policy and critic heads.
    pub head_hidden: usize,
    pub n_critics: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            width: 128,
            head_hidden: 256,
            n_critics: 2,
        }
    }
}

pub const DEFAULT_INITIAL_ALPHA: f64 = 0.1;

/// Every trainable piece of one agent plus the input normalization it was
/// trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub variant: Variant,
    pub dims: ModelDims,
    pub net: BeliefNet,
    pub decoder: DecoderParams,
    pub policy: PolicyParams,
    pub critics: CriticEnsemble,
    pub temp: EntropyTemperature,
    pub normalizers: BTreeMap<TaskKind, ObsNormalizer>,
}

/// Every tensor of the agent, target critics included, under stable
/// dotted names.
impl Parameterized for Agent {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("net", self.net.named_params());
        out.extend(prefixed("decoder", self.decoder.named_params()));
        out.extend(prefixed("policy", self.policy.named_params()));
        out.extend(prefixed("critic", self.critics.named_params()));
        out.extend(prefixed("temp", self.temp.named_params()));
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = prefixed("net", self.net.named_params_mut());
        out.extend(prefixed("decoder", self.decoder.named_params_mut()));
        out.extend(prefixed("policy", self.policy.named_params_mut()));
        out.extend(prefixed("critic", self.critics.named_params_mut()));
        out.extend(prefixed("temp", self.temp.named_params_mut()));
        out
    }
}

impl Agent {
    /// `obs_width` is the (padded) encoder input width.
    pub fn new(
        variant: Variant,
        obs_width: usize,
        action_dim: usize,
        dims: ModelDims,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng_for(seed, 0);
        let bd = BeliefDims::new(obs_width, dims.width);
        let net = BeliefNet::new(variant.arch(), bd, &mut rng);
        let b_dim = net.belief_dim();
        let decoder = DecoderParams::new(b_dim, bd.dec_hidden, obs_width, &mut rng);
        let policy = PolicyParams::new(b_dim, dims.head_hidden, action_dim, &mut rng);
        let critics = CriticEnsemble::new(
            dims.n_critics,
            b_dim,
            action_dim,
            dims.head_hidden,
            &mut rng,
        )?;
        Ok(Agent {
            variant,
            dims,
            net,
            decoder,
            policy,
            critics,
            temp: EntropyTemperature::new(DEFAULT_INITIAL_ALPHA, action_dim),
            normalizers: BTreeMap::new(),
        })
    }

    pub fn obs_width(&self) -> usize {
        self.net.dims.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.policy.action_dim
    }

    /// Fresh policy head, critics and temperature; the belief network and
    /// decoder are kept.
    pub fn reset_heads(&mut self, seed: u64) -> Result<()> {
        let mut rng = rng_for(seed, 1);
        let b_dim = self.net.belief_dim();
        let a = self.action_dim();
        self.policy = PolicyParams::new(b_dim, self.dims.head_hidden, a, &mut rng);
        self.reset_critics(seed)
    }

    pub fn reset_critics(&mut self, seed: u64) -> Result<()> {
        let mut rng = rng_for(seed, 2);
        let b_dim = self.net.belief_dim();
        let a = self.action_dim();
        self.critics = CriticEnsemble::new(
            self.dims.n_critics,
            b_dim,
            a,
            self.dims.head_hidden,
            &mut rng,
        )?;
        self.temp = EntropyTemperature::new(DEFAULT_INITIAL_ALPHA, a);
        Ok(())
    }

    pub fn normalizer(&self, task: TaskKind) -> ObsNormalizer {
        self.normalizers
            .get(&task)
            .cloned()
            .unwrap_or_else(|| ObsNormalizer::identity(self.obs_width()))
    }

    /// Encoder input for one step: normalized and padded when observed, the
    /// zero vector when dropped.
    pub fn effective_input(&self, norm: &ObsNormalizer, obs: &MaskedObservation) -> Vec<f64> {
        if obs.mask {
            norm.apply(&obs.raw, self.obs_width())
        } else {
            vec![0.0; self.obs_width()]
        }
    }

    pub fn initial_state(&self) -> BeliefState {
        self.net.zero_state()
    }

    /// Advances the belief with one observation and picks an action.
    pub fn step(
        &self,
        norm: &ObsNormalizer,
        state: &BeliefState,
        obs: &MaskedObservation,
        mode: ActionMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(BeliefState, Vec<f64>)> {
        let x = self.effective_input(norm, obs);
        let input = MaskedObservation {
            raw: x.clone(),
            mask: obs.mask,
            effective: x,
        };
        let next = self.net.belief_update(state, &input)?;
        let (a, _) = sample_action(&self.policy, &next.b, mode, rng)?;
        Ok((next, a))
    }

    pub fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.action_dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect()
    }
}

#[cfg(test)]
mod tests;
