use rand::Rng;

use crate::diffmath::{prefixed, Graph, Mlp, Parameterized, Tensor, Var};
use crate::error::{Error, Result};

/// `N` Q-networks over `[b, a]` with Polyak-averaged target copies.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticEnsemble {
    pub online: Vec<Mlp>,
    pub target: Vec<Mlp>,
}

impl CriticEnsemble {
    pub fn new<R: Rng + ?Sized>(
        n: usize,
        b_dim: usize,
        action_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::config(format!(
                "critic ensemble needs at least 2 members, got {n}"
            )));
        }
        let online: Vec<Mlp> = (0..n)
            .map(|_| Mlp::new(&[b_dim + action_dim, hidden, hidden, 1], false, rng))
            .collect();
        Ok(CriticEnsemble {
            target: online.clone(),
            online,
        })
    }

    pub fn len(&self) -> usize {
        self.online.len()
    }

    pub fn is_empty(&self) -> bool {
        self.online.is_empty()
    }

    fn q<'a>(net: &'a Mlp, g: &mut Graph<'a>, b: Var, a: Var) -> Result<Var> {
        let x = g.concat_cols(&[b, a])?;
        let q = net.forward(g, x)?;
        // [m × 1] → [m]
        g.sum_cols(q)
    }

    /// Online Q-values, one `[m]` node per member.
    pub fn q_online<'a>(&'a self, g: &mut Graph<'a>, b: Var, a: Var) -> Result<Vec<Var>> {
        self.online.iter().map(|n| Self::q(n, g, b, a)).collect()
    }

    pub fn q_target<'a>(&'a self, g: &mut Graph<'a>, b: Var, a: Var) -> Result<Vec<Var>> {
        self.target.iter().map(|n| Self::q(n, g, b, a)).collect()
    }

    /// `θ' ← τ·θ + (1 − τ)·θ'`.
    pub fn polyak_update(&mut self, tau: f64) {
        for (on, tg) in self.online.iter().zip(self.target.iter_mut()) {
            for (p, t) in on.params().into_iter().zip(tg.params_mut()) {
                for (x, y) in p.data().iter().zip(t.data_mut()) {
                    *y = tau * x + (1.0 - tau) * *y;
                }
            }
        }
    }

    pub fn online_params(&self) -> Vec<&Tensor> {
        self.online.iter().flat_map(|n| n.params()).collect()
    }

    pub fn online_params_mut(&mut self) -> Vec<&mut Tensor> {
        self.online
            .iter_mut()
            .flat_map(|n| n.params_mut())
            .collect()
    }

    pub fn online_grads(&self, g: &Graph) -> Vec<Tensor> {
        self.online.iter().flat_map(|n| n.grads(g)).collect()
    }

    pub fn target_grads(&self, g: &Graph) -> Vec<Tensor> {
        self.target.iter().flat_map(|n| n.grads(g)).collect()
    }
}

impl Parameterized for CriticEnsemble {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (k, n) in self.online.iter().enumerate() {
            out.extend(prefixed(&format!("q{k}"), n.named_params()));
        }
        for (k, n) in self.target.iter().enumerate() {
            out.extend(prefixed(&format!("q{k}_target"), n.named_params()));
        }
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (k, n) in self.online.iter_mut().enumerate() {
            out.extend(prefixed(&format!("q{k}"), n.named_params_mut()));
        }
        for (k, n) in self.target.iter_mut().enumerate() {
            out.extend(prefixed(&format!("q{k}_target"), n.named_params_mut()));
        }
        out
    }
}

/// Trainable temperature `α = exp(log_alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTemperature {
    pub log_alpha: Tensor,
    pub target_entropy: f64,
}

impl EntropyTemperature {
    pub fn new(alpha: f64, action_dim: usize) -> Self {
        EntropyTemperature {
            log_alpha: Tensor::scalar(alpha.ln()),
            target_entropy: -(action_dim as f64),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.item().exp()
    }
}

impl Parameterized for EntropyTemperature {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("log_alpha".into(), &self.log_alpha)]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("log_alpha".into(), &mut self.log_alpha)]
    }
}
