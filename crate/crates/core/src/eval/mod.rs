//! Success rate, return, relative degradation, probability sweeps and the
//! CSV/TSV report files.

mod reference;
mod report;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use reference::{ReferenceRow, REFERENCE_P, REFERENCE_ROWS};
pub use report::{
    emit_report, parse_results_csv, result_line, FailedCell, ResultRow, DEGRADATION_HEADER,
    RESULTS_HEADER,
};

use crate::agent::{ActionMode, Agent};
use crate::belief::{BeliefState, MaskedObservation, ObsNormalizer};
use crate::envs::{run_episode, DropoutWrapper, EnvState, Task, TaskKind};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Success,
    Reward,
}

/// Anything that can drive an episode.
pub trait Controller {
    fn reset(&mut self);
    fn act(&mut self, state: &EnvState, obs: &MaskedObservation) -> Result<Vec<f64>>;
}

/// Scripted expert with full state access.
pub struct ExpertController<'a> {
    pub task: &'a Task,
}

impl Controller for ExpertController<'_> {
    fn reset(&mut self) {}

    fn act(&mut self, state: &EnvState, _obs: &MaskedObservation) -> Result<Vec<f64>> {
        Ok(self.task.expert(state))
    }
}

/// Learned agent carrying its belief across the episode, masked steps
/// included.
pub struct AgentController<'a> {
    agent: &'a Agent,
    norm: ObsNormalizer,
    state: BeliefState,
    mode: ActionMode,
    rng: ChaCha8Rng,
}

impl<'a> AgentController<'a> {
    pub fn new(agent: &'a Agent, task: TaskKind, mode: ActionMode, seed: u64) -> Self {
        AgentController {
            agent,
            norm: agent.normalizer(task),
            state: agent.initial_state(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn belief(&self) -> &BeliefState {
        &self.state
    }
}

impl Controller for AgentController<'_> {
    fn reset(&mut self) {
        self.state = self.agent.initial_state();
    }

    fn act(&mut self, _state: &EnvState, obs: &MaskedObservation) -> Result<Vec<f64>> {
        let (next, a) = self
            .agent
            .step(&self.norm, &self.state, obs, self.mode, &mut self.rng)?;
        self.state = next;
        Ok(a)
    }
}

/// Compatibility of a task with an agent's input and action widths.
pub fn check_dims(agent: &Agent, task: &Task) -> Result<()> {
    if task.obs_dim() > agent.obs_width() || task.action_dim() != agent.action_dim() {
        return Err(Error::dim(
            "agent vs task (obs, action)",
            &[agent.obs_width(), agent.action_dim()],
            &[task.obs_dim(), task.action_dim()],
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub task: TaskKind,
    pub method: String,
    pub p: f64,
    /// Episodes over all seeds.
    pub n_episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub per_seed: Vec<SeedResult>,
    /// Population standard deviation of the per-seed values.
    pub success_std: f64,
    pub return_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Reset seed and mask seed of evaluation episode `i` under `seed`. Masks
/// depend only on these, so sweeps over `p` see nested dropout patterns.
pub fn episode_seeds(seed: u64, i: usize) -> (u64, u64) {
    let base = derive_seed(seed, 0xE7A1);
    (
        derive_seed(base, 2 * i as u64),
        derive_seed(base, 2 * i as u64 + 1),
    )
}

/// Runs `n_episodes` per seed under dropout `p` with a 50-step limit.
pub fn evaluate_with<C: Controller>(
    mut make: impl FnMut(u64) -> C,
    method: &str,
    task: &Task,
    p: f64,
    n_episodes: usize,
    seeds: &[u64],
) -> Result<EvalResult> {
    if n_episodes == 0 || seeds.is_empty() {
        return Err(Error::config(
            "evaluation needs at least one episode and one seed",
        ));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut ctl = make(seed);
        let mut successes = 0;
        let mut total_return = 0.0;
        for i in 0..n_episodes {
            let (reset_seed, mask_seed) = episode_seeds(seed, i);
            let mut wrapper = DropoutWrapper::new(p, mask_seed)?;
            ctl.reset();
            let mut err = None;
            let rec =
                run_episode(
                    task,
                    &mut wrapper,
                    reset_seed,
                    task.spec.horizon,
                    |s, o| match ctl.act(s, o) {
                        Ok(a) => a,
                        Err(e) => {
                            err.get_or_insert(e);
                            vec![0.0; task.action_dim()]
                        }
                    },
                );
            if let Some(e) = err {
                return Err(e);
            }
            successes += rec.success as usize;
            total_return += rec.episode_return();
        }
        per_seed.push(SeedResult {
            seed,
            successes,
            success_rate: successes as f64 / n_episodes as f64,
            mean_return: total_return / n_episodes as f64,
        });
    }
    let successes: usize = per_seed.iter().map(|s| s.successes).sum();
    let n_total = n_episodes * seeds.len();
    let (_, success_std) = mean_std(&per_seed.iter().map(|s| s.success_rate).collect::<Vec<_>>());
    let (mean_return, return_std) =
        mean_std(&per_seed.iter().map(|s| s.mean_return).collect::<Vec<_>>());
    Ok(EvalResult {
        task: task.kind(),
        method: method.to_string(),
        p,
        n_episodes: n_total,
        successes,
        success_rate: successes as f64 / n_total as f64,
        mean_return,
        per_seed,
        success_std,
        return_std,
    })
}

/// Deterministic-mode evaluation of a trained agent.
pub fn evaluate(
    agent: &Agent,
    task: &Task,
    p: f64,
    n_episodes: usize,
    seeds: &[u64],
) -> Result<EvalResult> {
    check_dims(agent, task)?;
    let make = |s: u64| AgentController::new(agent, task.kind(), ActionMode::Deterministic, s);
    evaluate_with(make, agent.variant.tag(), task, p, n_episodes, seeds)
}

pub fn evaluate_expert(
    task: &Task,
    p: f64,
    n_episodes: usize,
    seeds: &[u64],
) -> Result<EvalResult> {
    evaluate_with(
        |_| ExpertController { task },
        "expert",
        task,
        p,
        n_episodes,
        seeds,
    )
}

/// `(perf_p − perf_full) / perf_full`.
pub fn relative_degradation(perf_p: f64, perf_full: f64) -> Result<f64> {
    if perf_full == 0.0 {
        return Err(Error::UndefinedDegradation);
    }
    Ok((perf_p - perf_full) / perf_full)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationEntry {
    pub method: String,
    pub task: TaskKind,
    pub p: f64,
    /// `None` when the method's full-observability value is zero.
    pub success: Option<f64>,
    pub reward: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DegradationTable {
    pub entries: Vec<DegradationEntry>,
}

impl DegradationTable {
    /// Each (method, task) series against its own `p = 1.0` entry.
    pub fn from_results(results: &[EvalResult]) -> Result<Self> {
        let mut entries = Vec::with_capacity(results.len());
        for r in results {
            let full = results
                .iter()
                .find(|f| f.method == r.method && f.task == r.task && f.p == 1.0)
                .ok_or_else(|| {
                    Error::contract(format!("no p = 1.0 result for {} on {}", r.method, r.task))
                })?;
            entries.push(DegradationEntry {
                method: r.method.clone(),
                task: r.task,
                p: r.p,
                success: relative_degradation(r.success_rate, full.success_rate).ok(),
                reward: relative_degradation(r.mean_return, full.mean_return).ok(),
            });
        }
        Ok(DegradationTable { entries })
    }
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::config(format!("bad probability grid '{s}'"));
    let grid: Vec<f64> = if s.contains(':') {
        let parts: Vec<f64> = s
            .split(':')
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // snap to the step lattice so 0.5 + 2·0.05 prints as 0.6
        (0..=n)
            .map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9)
            .collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if grid.is_empty() || grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(bad());
    }
    Ok(grid)
}

/// One policy under test in a sweep.
pub enum SweepEntry<'a> {
    Agent(&'a Agent),
    Expert,
}

impl SweepEntry<'_> {
    pub fn tag(&self) -> &'static str {
        match self {
            SweepEntry::Agent(a) => a.variant.tag(),
            SweepEntry::Expert => "expert",
        }
    }
}

/// Evaluates every (method, p) cell, in parallel when `threads > 1`.
/// Results come back in (method, p) order whatever the thread count.
pub fn sweep(
    entries: &[SweepEntry],
    task: &Task,
    p_grid: &[f64],
    n_episodes: usize,
    seeds: &[u64],
    threads: usize,
) -> Result<(Vec<Result<EvalResult>>, DegradationTable)> {
    if p_grid.is_empty() || !p_grid.contains(&1.0) {
        return Err(Error::contract("sweep grid must contain p = 1.0"));
    }
    if entries.is_empty() {
        return Err(Error::config("sweep needs at least one policy"));
    }
    let cells: Vec<(usize, f64)> = (0..entries.len())
        .flat_map(|m| p_grid.iter().map(move |&p| (m, p)))
        .collect();
    let run = |&(m, p): &(usize, f64)| match &entries[m] {
        SweepEntry::Agent(a) => evaluate(a, task, p, n_episodes, seeds),
        SweepEntry::Expert => evaluate_expert(task, p, n_episodes, seeds),
    };
    let results: Vec<Result<EvalResult>> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run).collect())
    } else {
        cells.iter().map(run).collect()
    };
    let ok: Vec<EvalResult> = results
        .iter()
        .filter_map(|r| r.as_ref().ok().cloned())
        .collect();
    let complete: Vec<EvalResult> = ok
        .iter()
        .filter(|r| ok.iter().any(|f| f.method == r.method && f.p == 1.0))
        .cloned()
        .collect();
    let table = DegradationTable::from_results(&complete)?;
    Ok((results, table))
}

/// Largest gap, in percentage points, between the degradation recomputed from
/// the embedded reference grid and the published degradation table, with the
/// number of entries compared.
pub fn reference_arithmetic_check() -> Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for row in REFERENCE_ROWS.iter() {
        let full = row.values[10];
        for (k, &published) in row.degradation.iter().enumerate() {
            let d = 100.0 * relative_degradation(row.values[k], full)?;
            worst = worst.max((d - published).abs());
            n += 1;
        }
    }
    Ok((worst, n))
}

#[cfg(test)]
mod tests;
