//! Offline pretraining of the shared belief encoder with behavior cloning,
//! observation reconstruction and a masking curriculum.

mod dataset;

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use dataset::DemoDataset;

use crate::agent::{Agent, ModelDims, Optimizers, PolicyParams};
use crate::belief::{unit_gaussian_nll, DecoderParams};
use crate::diffmath::{Graph, Parameterized, Tensor, Var};
use crate::error::{Error, Result};
use crate::report::{fmt6, write_lines};
use crate::seed::rng_for;
use crate::variant::Variant;

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub variant: Variant,
    pub lambda: f64,
    /// `(fraction of training, masking probability)` stages in order.
    pub curriculum: Vec<(f64, f64)>,
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub truncation: Option<usize>,
    pub window: usize,
    pub dims: ModelDims,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            variant: Variant::Lstm,
            lambda: 1.0,
            curriculum: default_curriculum(),
            iterations: 10_000,
            batch_size: 256,
            lr: 1e-4,
            truncation: None,
            window: 20,
            dims: ModelDims::default(),
        }
    }
}

pub fn default_curriculum() -> Vec<(f64, f64)> {
    vec![(0.25, 0.0), (0.25, 0.1), (0.25, 0.25), (0.25, 0.5)]
}

impl PretrainConfig {
    /// Defaults with the variant's own reconstruction weight and truncation.
    pub fn for_variant(variant: Variant) -> Self {
        let mut c = PretrainConfig::default();
        c.apply_variant(variant);
        c
    }

    pub fn apply_variant(&mut self, variant: Variant) {
        self.variant = variant;
        if variant.default_lambda() == 0.0 {
            self.lambda = 0.0;
        }
        if let Some(k) = variant.bptt_truncation() {
            self.truncation = Some(k);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.curriculum.is_empty() {
            return Err(Error::config("masking curriculum is empty"));
        }
        let mut total = 0.0;
        for &(frac, p) in &self.curriculum {
            if !(frac > 0.0) {
                return Err(Error::config(format!(
                    "curriculum fraction {frac} must be positive"
                )));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!(
                    "masking probability {p} outside [0, 1]"
                )));
            }
            total += frac;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "curriculum fractions sum to {total}, expected 1"
            )));
        }
        if self.batch_size == 0 || self.window == 0 {
            return Err(Error::config("batch size and window must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!(
                "learning rate {} is invalid",
                self.lr
            )));
        }
        if self.truncation == Some(0) {
            return Err(Error::config("truncation length must be positive"));
        }
        Ok(())
    }

    /// Masking probability in force at `iteration`.
    pub fn p_mask_at(&self, iteration: usize) -> f64 {
        curriculum_p_mask(
            &self.curriculum,
            iteration as f64 / self.iterations.max(1) as f64,
        )
    }
}

/// Masking probability of the stage containing training fraction `frac`.
pub fn curriculum_p_mask(curriculum: &[(f64, f64)], frac: f64) -> f64 {
    let mut edge = 0.0;
    for &(f, p) in curriculum {
        edge += f;
        if frac < edge - 1e-12 {
            return p;
        }
    }
    curriculum.last().map(|c| c.1).unwrap_or(0.0)
}

/// `−mean log π(a* | b)` under the squashed Gaussian, with the number of
/// boundary actions that had to be pulled inside.
pub fn bc_loss<'a>(
    g: &mut Graph<'a>,
    policy: &'a PolicyParams,
    b: Var,
    expert: &Tensor,
) -> Result<(Var, usize)> {
    let (lp, clamped) = policy.log_prob_of(g, b, expert)?;
    let m = g.mean(lp);
    Ok((g.neg(m), clamped))
}

/// Unit-variance Gaussian NLL of raw observation targets.
pub fn recon_loss<'a>(
    g: &mut Graph<'a>,
    decoder: &'a DecoderParams,
    b: Var,
    raw: &Tensor,
) -> Result<Var> {
    let mean = decoder.forward(g, b)?;
    if g.shape(mean) != raw.shape() {
        return Err(Error::dim("recon_loss", g.shape(mean), raw.shape()));
    }
    let t = g.constant(raw.clone());
    unit_gaussian_nll(g, mean, t)
}

pub fn pretrain_loss(bc: f64, recon: f64, lambda: f64) -> f64 {
    bc + lambda * recon
}

/// One sampled batch of windows with fresh masks.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    /// Effective encoder inputs, one list per window.
    pub inputs: Vec<Vec<Vec<f64>>>,
    /// Normalized unmasked observations, aligned with `inputs`.
    pub targets: Vec<Vec<Vec<f64>>>,
    pub actions: Vec<Vec<Vec<f64>>>,
    pub p_mask: f64,
}

impl WindowBatch {
    pub fn sample<R: Rng + ?Sized>(
        data: &DemoDataset,
        size: usize,
        window: usize,
        p_mask: f64,
        rng: &mut R,
    ) -> Self {
        let mut b = WindowBatch {
            inputs: Vec::with_capacity(size),
            targets: Vec::with_capacity(size),
            actions: Vec::with_capacity(size),
            p_mask,
        };
        for _ in 0..size {
            let (ep, t) = data.pair(rng.random_range(0..data.num_pairs()));
            let start = (t + 1).saturating_sub(window);
            let mut inp = Vec::with_capacity(t + 1 - start);
            let mut tgt = Vec::with_capacity(t + 1 - start);
            let mut act = Vec::with_capacity(t + 1 - start);
            for s in start..=t {
                let x = data.input(ep, s);
                // same draw order as the online dropout wrapper; step 0 is always seen
                let u: f64 = rng.random();
                let keep = s == 0 || u >= p_mask;
                inp.push(if keep { x.clone() } else { vec![0.0; x.len()] });
                tgt.push(x);
                act.push(data.episodes[ep].act[s].clone());
            }
            b.inputs.push(inp);
            b.targets.push(tgt);
            b.actions.push(act);
        }
        b
    }

    pub fn steps(&self) -> usize {
        self.inputs.iter().map(|w| w.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub iteration: usize,
    pub bc_loss: f64,
    /// Weighted reconstruction term `λ·recon`.
    pub recon_loss: f64,
    pub total: f64,
    /// Unweighted per-dimension squared error of the decoder.
    pub recon_mse: f64,
    pub p_mask: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub rows: Vec<LossRow>,
}

impl LossCurve {
    pub const HEADER: &'static str = "iteration,bc_loss,recon_loss,total,recon_mse,p_mask";

    pub fn to_lines(&self) -> Vec<String> {
        let mut out = vec![Self::HEADER.to_string()];
        out.extend(self.rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.iteration,
                fmt6(r.bc_loss),
                fmt6(r.recon_loss),
                fmt6(r.total),
                fmt6(r.recon_mse),
                fmt6(r.p_mask)
            )
        }));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_lines(path, &self.to_lines())
    }
}

/// Loss terms evaluated on one batch.
pub struct BatchLoss {
    pub bc: f64,
    pub recon: f64,
    pub recon_mse: f64,
    pub total: f64,
    pub clamped: usize,
    pub grads_net: Vec<Tensor>,
    pub grads_decoder: Vec<Tensor>,
    pub grads_policy: Vec<Tensor>,
}

/// `bc + λ·recon` over every step of every window, with gradients.
pub fn window_loss(
    agent: &Agent,
    batch: &WindowBatch,
    lambda: f64,
    truncation: Option<usize>,
) -> Result<BatchLoss> {
    let refs: Vec<&[Vec<f64>]> = batch.inputs.iter().map(|w| w.as_slice()).collect();
    let mut g = Graph::new();
    let packed = agent.net.encode_sequence_batch(&mut g, &refs, truncation)?;
    let total = packed.total();
    let width = agent.obs_width();
    let a_dim = agent.action_dim();
    let mut acts = vec![0.0; total * a_dim];
    let mut tgts = vec![0.0; total * width];
    for i in 0..batch.inputs.len() {
        for s in 0..packed.lengths[i] {
            let r = packed.row(i, s);
            acts[r * a_dim..(r + 1) * a_dim].copy_from_slice(&batch.actions[i][s]);
            tgts[r * width..(r + 1) * width].copy_from_slice(&batch.targets[i][s]);
        }
    }
    let acts = Tensor::new(&[total, a_dim], acts)?;
    let tgts = Tensor::new(&[total, width], tgts)?;

    let (bc, clamped) = bc_loss(&mut g, &agent.policy, packed.beliefs, &acts)?;
    let (loss, recon_value) = if lambda > 0.0 {
        let rl = recon_loss(&mut g, &agent.decoder, packed.beliefs, &tgts)?;
        let w = g.scale(rl, lambda);
        (g.add(bc, w)?, g.value(rl).item())
    } else {
        (bc, f64::NAN)
    };
    g.backward(loss)?;
    let recon_mse = {
        let mut gd = Graph::no_grad();
        let b = gd.constant(g.value(packed.beliefs).clone());
        let y = agent.decoder.forward(&mut gd, b)?;
        let sq: f64 = gd
            .value(y)
            .data()
            .iter()
            .zip(tgts.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        sq / tgts.len() as f64
    };
    let recon = if lambda > 0.0 { recon_value } else { 0.0 };
    let bc_value = g.value(bc).item();
    Ok(BatchLoss {
        bc: bc_value,
        recon,
        recon_mse,
        total: pretrain_loss(bc_value, recon, lambda),
        clamped,
        grads_net: agent.net.grads(&g),
        grads_decoder: agent.decoder.grads(&g),
        grads_policy: agent.policy.grads(&g),
    })
}

/// Resumable pretraining state.
#[derive(Debug, Clone)]
pub struct Pretrainer {
    pub config: PretrainConfig,
    pub agent: Agent,
    pub opt: Optimizers,
    pub iteration: usize,
    pub curve: LossCurve,
    pub boundary_clamps: usize,
    pub seed: u64,
    pub rng: ChaCha8Rng,
}

impl Pretrainer {
    pub fn new(data: &DemoDataset, config: PretrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if data.num_pairs() == 0 {
            return Err(Error::contract("demo dataset is empty"));
        }
        let mut agent = Agent::new(
            config.variant,
            data.obs_width,
            data.action_dim,
            config.dims,
            seed,
        )?;
        agent.normalizers = data.normalizers.clone();
        let opt = Optimizers::new(&agent, config.lr);
        Ok(Pretrainer {
            config,
            agent,
            opt,
            iteration: 0,
            curve: LossCurve::default(),
            boundary_clamps: 0,
            seed,
            rng: rng_for(seed, 10),
        })
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    pub fn sample_batch(&mut self, data: &DemoDataset) -> WindowBatch {
        let p = self.config.p_mask_at(self.iteration);
        WindowBatch::sample(
            data,
            self.config.batch_size,
            self.config.window,
            p,
            &mut self.rng,
        )
    }

    pub fn step(&mut self, data: &DemoDataset) -> Result<LossRow> {
        let batch = self.sample_batch(data);
        let l = window_loss(
            &self.agent,
            &batch,
            self.config.lambda,
            self.config.truncation,
        )?;
        if !l.total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite pretraining loss at iteration {}",
                self.iteration
            )));
        }
        self.opt
            .belief
            .step(&mut self.agent.net.params_mut(), &l.grads_net)?;
        self.opt
            .policy
            .step(&mut self.agent.policy.params_mut(), &l.grads_policy)?;
        if self.config.lambda > 0.0 {
            self.opt
                .decoder
                .step(&mut self.agent.decoder.params_mut(), &l.grads_decoder)?;
        }
        self.boundary_clamps += l.clamped;
        let row = LossRow {
            iteration: self.iteration,
            bc_loss: l.bc,
            recon_loss: self.config.lambda * l.recon,
            total: l.total,
            recon_mse: l.recon_mse,
            p_mask: batch.p_mask,
        };
        self.curve.rows.push(row);
        self.iteration += 1;
        Ok(row)
    }

    /// Runs until `stop_at` iterations (capped by the configured total).
    pub fn run_until(&mut self, data: &DemoDataset, stop_at: usize) -> Result<()> {
        while self.iteration < stop_at.min(self.config.iterations) {
            self.step(data)?;
        }
        Ok(())
    }
}

pub struct PretrainOutput {
    pub agent: Agent,
    pub curve: LossCurve,
}

pub fn run_pretraining(
    data: &DemoDataset,
    config: PretrainConfig,
    seed: u64,
) -> Result<PretrainOutput> {
    let mut p = Pretrainer::new(data, config, seed)?;
    let n = p.config.iterations;
    p.run_until(data, n)?;
    Ok(PretrainOutput {
        agent: p.agent,
        curve: p.curve,
    })
}
