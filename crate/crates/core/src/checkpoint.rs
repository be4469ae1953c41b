//! Self-describing binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "MEMBOTCK" | u32 version
//! u32 n_meta   { u32 len, key utf-8, u32 len, value utf-8 }*
//! u32 n_tensor { u32 len, name utf-8, u32 rank, u64 dim*, f64 data* }*
//! ```
//!
//! Entries are written in key order so equal contents give equal bytes.
//! Floats in the metadata use Rust's shortest round-trip formatting.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::agent::{Agent, ModelDims, Optimizers};
use crate::belief::ObsNormalizer;
use crate::diffmath::{AdamState, Parameterized, Tensor};
use crate::envs::TaskKind;
use crate::error::{Error, Result};
use crate::finetune::Counters;
use crate::pretrain::{LossCurve, LossRow, PretrainConfig, Pretrainer};
use crate::seed::RngSnapshot;
use crate::variant::Variant;

pub const MAGIC: &[u8; 8] = b"MEMBOTCK";
pub const FORMAT_VERSION: u32 = 1;

const OPT_GROUPS: [&str; 5] = ["belief", "decoder", "policy", "critic", "alpha"];

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn set_f64(&mut self, key: &str, value: f64) {
        self.meta.insert(key.to_string(), format!("{value:?}"));
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| bad(format!("missing metadata key '{key}'")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| bad(format!("metadata '{key}' has unreadable value '{v}'")))
    }

    pub fn put(&mut self, name: &str, t: Tensor) {
        self.tensors.insert(name.to_string(), t);
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| bad(format!("missing tensor '{name}'")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let put_str = |out: &mut Vec<u8>, s: &str| {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        };
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("not a membot checkpoint (bad magic bytes)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(bad(format!(
                "checkpoint format version {version} is not supported (this build reads version {FORMAT_VERSION})"
            )));
        }
        let mut ck = Checkpoint::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            ck.meta.insert(k, v);
        }
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| bad("tensor too large"))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(&shape, data)
                .map_err(|_| bad(format!("tensor '{name}' has an invalid shape")))?;
            ck.tensors.insert(name, t);
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes after tensor table"));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => bad(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// Stores the agent's tensors and normalizers.
    pub fn put_agent(&mut self, agent: &Agent) {
        self.set("agent.variant", agent.variant.tag());
        self.set("agent.obs_width", agent.obs_width());
        self.set("agent.action_dim", agent.action_dim());
        self.set("agent.width", agent.dims.width);
        self.set("agent.head_hidden", agent.dims.head_hidden);
        self.set("agent.n_critics", agent.dims.n_critics);
        self.set_f64("agent.target_entropy", agent.temp.target_entropy);
        for (name, t) in agent.named_params() {
            self.put(&format!("agent.{name}"), t.clone());
        }
        let tasks: Vec<String> = agent.normalizers.keys().map(|k| k.to_string()).collect();
        self.set("agent.normalizers", tasks.join(","));
        for (task, n) in &agent.normalizers {
            self.put(&format!("norm.{task}.mean"), Tensor::vector(n.mean.clone()));
            self.put(&format!("norm.{task}.std"), Tensor::vector(n.std.clone()));
        }
    }

    pub fn agent(&self) -> Result<Agent> {
        let variant: Variant = self
            .get("agent.variant")?
            .parse()
            .map_err(|_| bad("unknown variant tag"))?;
        let dims = ModelDims {
            width: self.parse("agent.width")?,
            head_hidden: self.parse("agent.head_hidden")?,
            n_critics: self.parse("agent.n_critics")?,
        };
        let mut agent = Agent::new(
            variant,
            self.parse("agent.obs_width")?,
            self.parse("agent.action_dim")?,
            dims,
            0,
        )
        .map_err(|e| bad(format!("cannot rebuild agent: {e}")))?;
        agent.temp.target_entropy = self.parse("agent.target_entropy")?;
        let mut expected = 0;
        for (name, slot) in agent.named_params_mut() {
            let t = self.tensor(&format!("agent.{name}"))?;
            if t.shape() != slot.shape() {
                return Err(bad(format!(
                    "tensor 'agent.{name}' has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.clone();
            expected += 1;
        }
        let stored = self
            .tensors
            .keys()
            .filter(|k| k.starts_with("agent."))
            .count();
        if stored != expected {
            return Err(bad(format!(
                "checkpoint holds {stored} agent tensors, the architecture has {expected}"
            )));
        }
        let tasks = self.get("agent.normalizers")?;
        for task in tasks.split(',').filter(|s| !s.is_empty()) {
            let kind: TaskKind = task
                .parse()
                .map_err(|_| bad(format!("unknown task '{task}'")))?;
            let mean = self.tensor(&format!("norm.{task}.mean"))?.data().to_vec();
            let std = self.tensor(&format!("norm.{task}.std"))?.data().to_vec();
            if mean.len() != std.len() {
                return Err(bad(format!("normalizer for {task} has mismatched lengths")));
            }
            agent.normalizers.insert(kind, ObsNormalizer { mean, std });
        }
        Ok(agent)
    }

    pub fn put_optimizers(&mut self, opt: &Optimizers) {
        for (g, s) in OPT_GROUPS.iter().zip(opt_groups(opt)) {
            self.set_f64(&format!("opt.{g}.lr"), s.lr);
            self.set_f64(&format!("opt.{g}.beta1"), s.beta1);
            self.set_f64(&format!("opt.{g}.beta2"), s.beta2);
            self.set_f64(&format!("opt.{g}.eps"), s.eps);
            self.set(&format!("opt.{g}.step"), s.step);
            self.set(&format!("opt.{g}.len"), s.m.len());
            for (i, (m, v)) in s.m.iter().zip(&s.v).enumerate() {
                self.put(&format!("opt.{g}.m.{i:04}"), m.clone());
                self.put(&format!("opt.{g}.v.{i:04}"), v.clone());
            }
        }
    }

    /// Optimizer states, checked against the parameter shapes of `agent`.
    pub fn optimizers(&self, agent: &Agent) -> Result<Optimizers> {
        let mut opt = Optimizers::new(agent, 0.0);
        for (g, s) in OPT_GROUPS.iter().zip(opt_groups_mut(&mut opt)) {
            let len: usize = self.parse(&format!("opt.{g}.len"))?;
            if len != s.m.len() {
                return Err(bad(format!(
                    "optimizer group {g} has {len} slots, expected {}",
                    s.m.len()
                )));
            }
            s.lr = self.parse(&format!("opt.{g}.lr"))?;
            s.beta1 = self.parse(&format!("opt.{g}.beta1"))?;
            s.beta2 = self.parse(&format!("opt.{g}.beta2"))?;
            s.eps = self.parse(&format!("opt.{g}.eps"))?;
            s.step = self.parse(&format!("opt.{g}.step"))?;
            for i in 0..len {
                for (kind, slot) in [("m", &mut s.m[i]), ("v", &mut s.v[i])] {
                    let t = self.tensor(&format!("opt.{g}.{kind}.{i:04}"))?;
                    if t.shape() != slot.shape() {
                        return Err(bad(format!(
                            "optimizer tensor opt.{g}.{kind}.{i:04} has the wrong shape"
                        )));
                    }
                    *slot = t.clone();
                }
            }
        }
        Ok(opt)
    }

    pub fn has_optimizers(&self) -> bool {
        self.meta.contains_key("opt.belief.len")
    }

    pub fn put_counters(&mut self, c: &Counters) {
        self.set("counters.env_steps", c.env_steps);
        self.set("counters.episodes", c.episodes);
        self.set("counters.joint_updates", c.joint_updates);
        self.set("counters.bc_updates", c.bc_updates);
        self.set("counters.stale_priority_updates", c.stale_priority_updates);
        self.set("counters.clipped_actions", c.clipped_actions);
    }

    pub fn counters(&self) -> Result<Counters> {
        Ok(Counters {
            env_steps: self.parse("counters.env_steps")?,
            episodes: self.parse("counters.episodes")?,
            joint_updates: self.parse("counters.joint_updates")?,
            bc_updates: self.parse("counters.bc_updates")?,
            stale_priority_updates: self.parse("counters.stale_priority_updates")?,
            clipped_actions: self.parse("counters.clipped_actions")?,
        })
    }

    /// Everything needed to continue a pretraining run where it stopped.
    pub fn from_pretrainer(p: &Pretrainer, data_pairs: usize) -> Self {
        let mut ck = Checkpoint::new();
        ck.set("kind", "pretrain");
        ck.put_agent(&p.agent);
        ck.put_optimizers(&p.opt);
        let c = &p.config;
        ck.set("pretrain.variant", c.variant.tag());
        ck.set_f64("pretrain.lambda", c.lambda);
        let stages: Vec<String> = c
            .curriculum
            .iter()
            .map(|(f, q)| format!("{f:?}:{q:?}"))
            .collect();
        ck.set("pretrain.curriculum", stages.join(","));
        ck.set("pretrain.iterations", c.iterations);
        ck.set("pretrain.batch_size", c.batch_size);
        ck.set_f64("pretrain.lr", c.lr);
        ck.set(
            "pretrain.truncation",
            c.truncation.map_or("none".to_string(), |k| k.to_string()),
        );
        ck.set("pretrain.window", c.window);
        ck.set("pretrain.iteration", p.iteration);
        ck.set("pretrain.boundary_clamps", p.boundary_clamps);
        ck.set("pretrain.seed", p.seed);
        ck.set("pretrain.data_pairs", data_pairs);
        ck.put_rng("pretrain.rng", &RngSnapshot::capture(&p.rng));
        let rows: Vec<[f64; 6]> = p
            .curve
            .rows
            .iter()
            .map(|r| {
                [
                    r.iteration as f64,
                    r.bc_loss,
                    r.recon_loss,
                    r.total,
                    r.recon_mse,
                    r.p_mask,
                ]
            })
            .collect();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        ck.put(
            "pretrain.curve",
            Tensor::new(&[rows.len(), 6], flat).expect("curve shape"),
        );
        ck
    }

    pub fn pretrainer(&self) -> Result<Pretrainer> {
        if self.get("kind")? != "pretrain" {
            return Err(bad("not a pretraining checkpoint"));
        }
        let agent = self.agent()?;
        let opt = self.optimizers(&agent)?;
        let mut curriculum = Vec::new();
        for stage in self.get("pretrain.curriculum")?.split(',') {
            let (f, q) = stage
                .split_once(':')
                .ok_or_else(|| bad("bad curriculum entry"))?;
            let f: f64 = f.parse().map_err(|_| bad("bad curriculum fraction"))?;
            let q: f64 = q.parse().map_err(|_| bad("bad curriculum probability"))?;
            curriculum.push((f, q));
        }
        let truncation = match self.get("pretrain.truncation")? {
            "none" => None,
            _ => Some(self.parse("pretrain.truncation")?),
        };
        let config = PretrainConfig {
            variant: self
                .get("pretrain.variant")?
                .parse()
                .map_err(|_| bad("unknown variant tag"))?,
            lambda: self.parse("pretrain.lambda")?,
            curriculum,
            iterations: self.parse("pretrain.iterations")?,
            batch_size: self.parse("pretrain.batch_size")?,
            lr: self.parse("pretrain.lr")?,
            truncation,
            window: self.parse("pretrain.window")?,
            dims: agent.dims,
        };
        let curve = self.tensor("pretrain.curve")?;
        if curve.rank() != 2 || curve.shape()[1] != 6 {
            return Err(bad("loss curve tensor must be [n x 6]"));
        }
        let rows = (0..curve.rows())
            .map(|i| {
                let r = curve.row(i);
                LossRow {
                    iteration: r[0] as usize,
                    bc_loss: r[1],
                    recon_loss: r[2],
                    total: r[3],
                    recon_mse: r[4],
                    p_mask: r[5],
                }
            })
            .collect();
        Ok(Pretrainer {
            config,
            agent,
            opt,
            iteration: self.parse("pretrain.iteration")?,
            curve: LossCurve { rows },
            boundary_clamps: self.parse("pretrain.boundary_clamps")?,
            seed: self.parse("pretrain.seed")?,
            rng: self.rng("pretrain.rng")?.restore(),
        })
    }

    pub fn put_rng(&mut self, prefix: &str, s: &RngSnapshot) {
        let hex: String = s.seed.iter().map(|b| format!("{b:02x}")).collect();
        self.set(&format!("{prefix}.seed"), hex);
        self.set(&format!("{prefix}.stream"), s.stream);
        self.set(&format!("{prefix}.word_pos"), s.word_pos);
    }

    pub fn rng(&self, prefix: &str) -> Result<RngSnapshot> {
        let hex = self.get(&format!("{prefix}.seed"))?;
        if hex.len() != 64 {
            return Err(bad("rng seed must be 64 hex digits"));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
                .map_err(|_| bad("rng seed is not hex"))?;
        }
        Ok(RngSnapshot {
            seed,
            stream: self.parse(&format!("{prefix}.stream"))?,
            word_pos: self.parse(&format!("{prefix}.word_pos"))?,
        })
    }
}

fn opt_groups(o: &Optimizers) -> [&AdamState; 5] {
    [&o.belief, &o.decoder, &o.policy, &o.critic, &o.alpha]
}

fn opt_groups_mut(o: &mut Optimizers) -> [&mut AdamState; 5] {
    [
        &mut o.belief,
        &mut o.decoder,
        &mut o.policy,
        &mut o.critic,
        &mut o.alpha,
    ]
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(e) => {
                let s = &self.bytes[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(bad(format!("truncated at byte {}", self.pos))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("metadata is not utf-8"))
    }
}
