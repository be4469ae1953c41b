use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffmath::{
    gaussian_log_prob, log_one_minus_tanh_sq, Graph, Mlp, Parameterized, Tensor, Var,
};
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Expert actions are pulled this far inside the open box before `atanh`.
pub const ACTION_EDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Stochastic,
    Deterministic,
}

/// Squashed-Gaussian policy head `π_θ(a | b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub mlp: Mlp,
    pub action_dim: usize,
}

/// Reparameterized sample: `a = tanh(μ + σ·ε)` with its log-density, per row.
#[derive(Debug, Clone, Copy)]
pub struct PolicySample {
    pub action: Var,
    pub log_prob: Var,
    pub mean: Var,
    pub log_std: Var,
}

impl PolicyParams {
    pub fn new<R: Rng + ?Sized>(
        b_dim: usize,
        hidden: usize,
        action_dim: usize,
        rng: &mut R,
    ) -> Self {
        PolicyParams {
            mlp: Mlp::new(&[b_dim, hidden, hidden, 2 * action_dim], false, rng),
            action_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    /// Mean and clamped log-std, each `[m × action_dim]`.
    pub fn heads<'a>(&'a self, g: &mut Graph<'a>, b: Var) -> Result<(Var, Var)> {
        let out = self.mlp.forward(g, b)?;
        let mean = g.slice_cols(out, 0, self.action_dim)?;
        let raw = g.slice_cols(out, self.action_dim, self.action_dim)?;
        let log_std = g.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
        Ok((mean, log_std))
    }

    /// Sample with externally supplied standard-normal noise `eps: [m × A]`.
    pub fn sample_with_noise<'a>(
        &'a self,
        g: &mut Graph<'a>,
        b: Var,
        eps: Tensor,
    ) -> Result<PolicySample> {
        let (mean, log_std) = self.heads(g, b)?;
        if eps.shape() != g.shape(mean) {
            return Err(Error::dim("policy_noise", eps.shape(), g.shape(mean)));
        }
        let eps = g.constant(eps);
        let std = g.exp(log_std);
        let noise = g.mul(std, eps)?;
        let u = g.add(mean, noise)?;
        let action = g.tanh(u);
        let base = gaussian_log_prob(g, u, mean, log_std)?;
        let corr = log_one_minus_tanh_sq(g, u);
        let corr = g.sum_cols(corr)?;
        let log_prob = g.sub(base, corr)?;
        Ok(PolicySample {
            action,
            log_prob,
            mean,
            log_std,
        })
    }

    /// Log-density of given actions (rows in (−1, 1)) under the policy. Entries
    /// on or beyond the boundary are pulled inside; their count is returned.
    pub fn log_prob_of<'a>(
        &'a self,
        g: &mut Graph<'a>,
        b: Var,
        actions: &Tensor,
    ) -> Result<(Var, usize)> {
        let (mean, log_std) = self.heads(g, b)?;
        if actions.shape() != g.shape(mean) {
            return Err(Error::dim(
                "policy_log_prob",
                actions.shape(),
                g.shape(mean),
            ));
        }
        let lim = 1.0 - ACTION_EDGE;
        let mut clamped = 0;
        let mut pre = Vec::with_capacity(actions.len());
        let mut corr = vec![0.0; actions.rows()];
        let a_dim = self.action_dim;
        for (i, &a) in actions.data().iter().enumerate() {
            let c = if a.abs() >= lim {
                clamped += 1;
                a.clamp(-lim, lim)
            } else {
                a
            };
            pre.push(c.atanh());
            corr[i / a_dim] += (1.0 - c * c).ln();
        }
        let u = g.constant(Tensor::new(actions.shape(), pre)?);
        let base = gaussian_log_prob(g, u, mean, log_std)?;
        let corr = g.constant(Tensor::vector(corr));
        Ok((g.sub(base, corr)?, clamped))
    }
}

impl Parameterized for PolicyParams {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.mlp.named_params()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.mlp.named_params_mut()
    }
}

pub fn standard_normal<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::new(shape, data).expect("shape and data agree")
}

/// Single action for a belief vector. Deterministic mode returns `tanh(μ)`
/// and no log-probability.
pub fn sample_action<R: Rng + ?Sized>(
    policy: &PolicyParams,
    b: &Tensor,
    mode: ActionMode,
    rng: &mut R,
) -> Result<(Vec<f64>, Option<f64>)> {
    if !b.is_finite() {
        return Err(Error::Numeric("sample_action: non-finite belief".into()));
    }
    if b.len() != policy.input_dim() {
        return Err(Error::dim(
            "sample_action",
            &[b.len()],
            &[policy.input_dim()],
        ));
    }
    let mut g = Graph::no_grad();
    let bv = g.constant(Tensor::new(&[1, b.len()], b.data().to_vec())?);
    match mode {
        ActionMode::Deterministic => {
            let (mean, _) = policy.heads(&mut g, bv)?;
            let a = g.tanh(mean);
            Ok((g.value(a).data().to_vec(), None))
        }
        ActionMode::Stochastic => {
            let eps = standard_normal(&[1, policy.action_dim], rng);
            let s = policy.sample_with_noise(&mut g, bv, eps)?;
            Ok((
                g.value(s.action).data().to_vec(),
                Some(g.value(s.log_prob).item()),
            ))
        }
    }
}
