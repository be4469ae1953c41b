use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dropout::DropoutWrapper;
use super::tasks::{EnvState, Task, TaskKind};
use crate::belief::MaskedObservation;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// One trajectory. `obs[t]` is the raw observation the action `act[t]` was
/// chosen from and `rew[t]` the reward that followed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task: TaskKind,
    pub seed: u64,
    pub obs: Vec<Vec<f64>>,
    pub mask: Vec<u8>,
    pub act: Vec<Vec<f64>>,
    pub rew: Vec<f64>,
    pub success: bool,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn episode_return(&self) -> f64 {
        self.rew.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.obs.len();
        if n == 0 || n > super::HORIZON {
            return Err(Error::contract(format!(
                "episode length {n} outside 1..=50"
            )));
        }
        if self.mask.len() != n || self.act.len() != n || self.rew.len() != n {
            return Err(Error::contract("episode arrays differ in length"));
        }
        if self.mask.iter().any(|&m| m > 1) {
            return Err(Error::contract("mask entries must be 0 or 1"));
        }
        let od = self.obs[0].len();
        let ad = self.act[0].len();
        if self.obs.iter().any(|o| o.len() != od) || self.act.iter().any(|a| a.len() != ad) {
            return Err(Error::contract("ragged observation or action rows"));
        }
        if self.act.iter().flatten().any(|a| !(-1.0..=1.0).contains(a)) {
            return Err(Error::contract("action outside [-1, 1]"));
        }
        if self.success != self.rew.iter().any(|&r| r > 0.0) {
            return Err(Error::contract("success flag disagrees with rewards"));
        }
        Ok(())
    }
}

/// Runs one episode. `act` sees the full state (for scripted experts) and the
/// masked observation (for learned agents) and returns an action.
pub fn run_episode(
    task: &Task,
    wrapper: &mut DropoutWrapper,
    episode_seed: u64,
    max_len: usize,
    mut act: impl FnMut(&EnvState, &MaskedObservation) -> Vec<f64>,
) -> EpisodeRecord {
    let mut state = task.reset(episode_seed);
    let mut rec = EpisodeRecord {
        task: task.kind(),
        seed: episode_seed,
        obs: Vec::new(),
        mask: Vec::new(),
        act: Vec::new(),
        rew: Vec::new(),
        success: false,
    };
    let limit = max_len.min(task.spec.horizon);
    while rec.obs.len() < limit {
        let o = wrapper.observe(task, &state);
        let a: Vec<f64> = act(&state, &o).iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let out = task.step(&state, &a);
        rec.obs.push(o.raw);
        rec.mask.push(o.mask as u8);
        rec.act.push(a);
        rec.rew.push(out.reward);
        state = out.state;
        if out.success {
            rec.success = true;
        }
        if out.done {
            break;
        }
    }
    rec
}

/// Rolls the scripted expert under full observability.
pub fn collect_demos(
    task: &Task,
    n_episodes: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    if n_episodes == 0 {
        return Err(Error::config("need at least one demonstration episode"));
    }
    if max_len == 0 {
        return Err(Error::config("max episode length must be positive"));
    }
    let mut wrapper = DropoutWrapper::new(1.0, seed)?;
    Ok((0..n_episodes as u64)
        .map(|i| {
            run_episode(task, &mut wrapper, derive_seed(seed, i), max_len, |s, _| {
                task.expert(s)
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoHeader {
    pub format: String,
    pub version: u32,
    pub task: TaskKind,
    pub obs_dim: usize,
    pub action_dim: usize,
}

pub const DEMO_FORMAT: &str = "membot-demos";

pub fn write_demos(path: &Path, task: &Task, episodes: &[EpisodeRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = DemoHeader {
        format: DEMO_FORMAT.into(),
        version: 1,
        task: task.kind(),
        obs_dim: task.obs_dim(),
        action_dim: task.action_dim(),
    };
    writeln!(
        w,
        "{}",
        serde_json::to_string(&header).expect("plain struct")
    )?;
    for ep in episodes {
        writeln!(w, "{}", serde_json::to_string(ep).expect("plain struct"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_demos(path: &Path) -> Result<(DemoHeader, Vec<EpisodeRecord>)> {
    let reader = BufReader::new(File::open(path)?);
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut header: Option<DemoHeader> = None;
    let mut episodes = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match &header {
            None => {
                let h: DemoHeader = serde_json::from_str(&line)
                    .map_err(|e| perr(lineno, format!("bad header: {e}")))?;
                if h.format != DEMO_FORMAT || h.version != 1 {
                    return Err(perr(
                        lineno,
                        format!("unsupported demo format {} v{}", h.format, h.version),
                    ));
                }
                header = Some(h);
            }
            Some(h) => {
                let ep: EpisodeRecord =
                    serde_json::from_str(&line).map_err(|e| perr(lineno, e.to_string()))?;
                ep.validate().map_err(|e| perr(lineno, e.to_string()))?;
                if ep.obs[0].len() != h.obs_dim || ep.act[0].len() != h.action_dim {
                    return Err(perr(
                        lineno,
                        "record dimensions disagree with header".into(),
                    ));
                }
                episodes.push(ep);
            }
        }
    }
    let header = header.ok_or_else(|| perr(1, "empty demo file".into()))?;
    Ok((header, episodes))
}
