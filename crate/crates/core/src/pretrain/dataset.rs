use std::collections::BTreeMap;

use crate::belief::ObsNormalizer;
use crate::envs::{collect_demos, EpisodeRecord, Task, TaskKind};
use crate::error::{Error, Result};

/// Demonstrations from one or more tasks, indexed by `(episode, step)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    pub episodes: Vec<EpisodeRecord>,
    pub normalizers: BTreeMap<TaskKind, ObsNormalizer>,
    /// Encoder input width: the widest observation across tasks.
    pub obs_width: usize,
    pub action_dim: usize,
    index: Vec<(usize, usize)>,
}

impl DemoDataset {
    pub fn from_episodes(episodes: Vec<EpisodeRecord>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::contract("demo dataset is empty"));
        }
        for ep in &episodes {
            ep.validate()?;
        }
        let action_dim = episodes[0].act[0].len();
        if episodes.iter().any(|e| e.act[0].len() != action_dim) {
            return Err(Error::contract(
                "demo episodes disagree on action dimension",
            ));
        }
        let mut dims: BTreeMap<TaskKind, usize> = BTreeMap::new();
        for ep in &episodes {
            let d = ep.obs[0].len();
            if *dims.entry(ep.task).or_insert(d) != d {
                return Err(Error::contract(format!(
                    "task {} has mixed observation widths",
                    ep.task
                )));
            }
        }
        let obs_width = dims.values().copied().max().unwrap_or(0);
        let mut normalizers = BTreeMap::new();
        for (&task, &d) in &dims {
            let rows = episodes
                .iter()
                .filter(|e| e.task == task)
                .flat_map(|e| e.obs.iter().map(|o| o.as_slice()));
            normalizers.insert(task, ObsNormalizer::fit(rows, d)?);
        }
        let index = episodes
            .iter()
            .enumerate()
            .flat_map(|(i, e)| (0..e.len()).map(move |t| (i, t)))
            .collect();
        Ok(DemoDataset {
            episodes,
            normalizers,
            obs_width,
            action_dim,
            index,
        })
    }

    /// Expert demonstrations under full observability.
    pub fn collect(task: &Task, n_episodes: usize, max_len: usize, seed: u64) -> Result<Self> {
        Self::from_episodes(collect_demos(task, n_episodes, max_len, seed)?)
    }

    /// Re-expresses the inputs in an agent's layout: its normalizers for the
    /// tasks it knows and its (padded) input width.
    pub fn aligned_to(
        mut self,
        normalizers: &BTreeMap<TaskKind, ObsNormalizer>,
        width: usize,
    ) -> Result<Self> {
        for (task, norm) in self.normalizers.iter_mut() {
            if let Some(n) = normalizers.get(task) {
                if n.dim() != norm.dim() {
                    return Err(Error::dim("demo normalizer", &[norm.dim()], &[n.dim()]));
                }
                *norm = n.clone();
            }
        }
        if width < self.obs_width {
            return Err(Error::dim(
                "demo observation width",
                &[self.obs_width],
                &[width],
            ));
        }
        self.obs_width = width;
        Ok(self)
    }

    pub fn num_pairs(&self) -> usize {
        self.index.len()
    }

    pub fn pair(&self, k: usize) -> (usize, usize) {
        self.index[k]
    }

    pub fn tasks(&self) -> Vec<TaskKind> {
        self.normalizers.keys().copied().collect()
    }

    /// Normalized, zero-padded raw observation.
    pub fn input(&self, episode: usize, t: usize) -> Vec<f64> {
        let ep = &self.episodes[episode];
        self.normalizers[&ep.task].apply(&ep.obs[t], self.obs_width)
    }
}
