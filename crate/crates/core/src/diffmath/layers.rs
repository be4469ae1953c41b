//! Dense building blocks shared by every trainable network.

use rand::Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Anything owning named trainable tensors in a fixed order.
pub trait Parameterized {
    fn named_params(&self) -> Vec<(String, &Tensor)>;
    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn params(&self) -> Vec<&Tensor> {
        self.named_params().into_iter().map(|(_, t)| t).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.named_params_mut()
            .into_iter()
            .map(|(_, t)| t)
            .collect()
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Gradients read back from `g`, zero for parameters the graph never used.
    fn grads(&self, g: &Graph) -> Vec<Tensor> {
        self.params()
            .into_iter()
            .map(|p| {
                g.param_grad(p)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(p.shape()))
            })
            .collect()
    }
}

pub(crate) fn prefixed<'a, T>(prefix: &str, v: Vec<(String, T)>) -> Vec<(String, T)> {
    v.into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}

/// `y = x · W + b` with `W: [in × out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Linear {
            w: Tensor::uniform(&[fan_in, fan_out], bound, rng),
            b: Tensor::uniform(&[fan_out], bound, rng),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            w: Tensor::zeros(&[fan_in, fan_out]),
            b: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, x: Var) -> Result<Var> {
        let w = g.param(&self.w);
        let b = g.param(&self.b);
        let xw = g.matmul(x, w)?;
        g.add(xw, b)
    }
}

impl Parameterized for Linear {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("w".into(), &mut self.w), ("b".into(), &mut self.b)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(d: usize) -> Self {
        LayerNorm {
            gain: Tensor::full(&[d], 1.0),
            bias: Tensor::zeros(&[d]),
            eps: 1e-5,
        }
    }

    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, x: Var) -> Result<Var> {
        let gain = g.param(&self.gain);
        let bias = g.param(&self.bias);
        g.layer_norm(x, gain, bias, self.eps)
    }
}

impl Parameterized for LayerNorm {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("gain".into(), &self.gain), ("bias".into(), &self.bias)]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("gain".into(), &mut self.gain),
            ("bias".into(), &mut self.bias),
        ]
    }
}

/// Stack of dense layers with ReLU (optionally preceded by layer norm)
/// between them. The last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub norms: Vec<LayerNorm>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(dims: &[usize], layer_norm: bool, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output sizes");
        let layers = dims
            .windows(2)
            .map(|w| Linear::new(w[0], w[1], rng))
            .collect::<Vec<_>>();
        let norms = if layer_norm {
            dims[1..dims.len() - 1]
                .iter()
                .map(|&d| LayerNorm::new(d))
                .collect()
        } else {
            Vec::new()
        };
        Mlp { layers, norms }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Linear::fan_out).unwrap_or(0)
    }

    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, h)?;
            if i < last {
                if let Some(ln) = self.norms.get(i) {
                    h = ln.forward(g, h)?;
                }
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

impl Parameterized for Mlp {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(prefixed(&format!("l{i}"), l.named_params()));
            if let Some(n) = self.norms.get(i) {
                out.extend(prefixed(&format!("ln{i}"), n.named_params()));
            }
        }
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        let mut norms = self.norms.iter_mut();
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.extend(prefixed(&format!("l{i}"), l.named_params_mut()));
            if let Some(n) = norms.next() {
                out.extend(prefixed(&format!("ln{i}"), n.named_params_mut()));
            }
        }
        out
    }
}
