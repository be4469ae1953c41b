use std::collections::BTreeMap;

use rand::Rng;

use super::sumtree::SumTree;
use crate::envs::TaskKind;
use crate::error::{Error, Result};

/// One environment step. Raw observations and masks are kept so beliefs can
/// be recomputed from the episode history at replay time.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub task: TaskKind,
    pub episode: u64,
    pub t: usize,
    pub obs: Vec<f64>,
    pub mask: bool,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub next_mask: bool,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct History {
    task: TaskKind,
    /// Time index of `obs[0]`.
    start: usize,
    obs: Vec<Vec<f64>>,
    mask: Vec<bool>,
    live: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    serial: u64,
    episode: u64,
    t: usize,
    action: Vec<f64>,
    reward: f64,
    done: bool,
}

/// Handle returned by `sample`; goes stale once its slot is overwritten.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleIndex {
    pub slot: usize,
    pub serial: u64,
}

/// A replayed transition with the observation history ending at `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Replayed {
    pub task: TaskKind,
    /// `(raw, mask)` pairs; the last two are steps `t` and `t + 1`.
    pub history: Vec<(Vec<f64>, bool)>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerParams {
    pub alpha: f64,
    pub eps: f64,
}

impl Default for PerParams {
    fn default() -> Self {
        PerParams {
            alpha: 0.6,
            eps: 1e-3,
        }
    }
}

/// Ring buffer with proportional prioritized sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    per: PerParams,
    entries: Vec<Entry>,
    /// Raw priorities `|δ| + ε` (before the exponent).
    priorities: Vec<f64>,
    tree: SumTree,
    next: usize,
    serial: u64,
    max_priority: f64,
    histories: BTreeMap<u64, History>,
    pub stale_updates: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, per: PerParams) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        if !(per.alpha >= 0.0 && per.eps > 0.0) {
            return Err(Error::config("PER needs alpha >= 0 and eps > 0"));
        }
        Ok(ReplayBuffer {
            capacity,
            per,
            entries: Vec::new(),
            priorities: Vec::new(),
            tree: SumTree::new(capacity),
            next: 0,
            serial: 0,
            max_priority: 0.0,
            histories: BTreeMap::new(),
            stale_updates: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn priority(&self, slot: usize) -> f64 {
        self.priorities[slot]
    }

    pub fn probability(&self, slot: usize) -> f64 {
        self.tree.get(slot) / self.tree.total()
    }

    /// Stored episodes still referenced by live transitions.
    pub fn episodes_held(&self) -> usize {
        self.histories.len()
    }

    fn set_priority(&mut self, slot: usize, p: f64) {
        self.priorities[slot] = p;
        self.tree.set(slot, p.powf(self.per.alpha));
        self.max_priority = self.max_priority.max(p);
    }

    /// Appends at the highest priority seen so far (1.0 when empty),
    /// evicting the oldest entry at capacity.
    pub fn store(&mut self, tr: Transition) -> Result<()> {
        let h = self.histories.entry(tr.episode).or_insert_with(|| History {
            task: tr.task,
            start: tr.t,
            obs: vec![tr.obs.clone()],
            mask: vec![tr.mask],
            live: 0,
        });
        if h.task != tr.task || tr.t + 1 != h.start + h.obs.len() {
            return Err(Error::contract(format!(
                "transition t={} does not extend episode {} history",
                tr.t, tr.episode
            )));
        }
        h.obs.push(tr.next_obs);
        h.mask.push(tr.next_mask);
        h.live += 1;

        let entry = Entry {
            serial: self.serial,
            episode: tr.episode,
            t: tr.t,
            action: tr.action,
            reward: tr.reward,
            done: tr.done,
        };
        self.serial += 1;
        let p = if self.is_empty() {
            1.0
        } else {
            self.max_priority
        };
        let slot = self.next;
        if slot == self.entries.len() {
            self.entries.push(entry);
            self.priorities.push(p);
        } else {
            let old = std::mem::replace(&mut self.entries[slot], entry);
            self.release(old.episode);
        }
        self.set_priority(slot, p);
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    fn release(&mut self, episode: u64) {
        if let Some(h) = self.histories.get_mut(&episode) {
            h.live -= 1;
            if h.live == 0 {
                self.histories.remove(&episode);
            }
        }
    }

    /// Draws `n` slots with probability `p_i^α / Σ p^α` and returns importance
    /// weights `(N·P(i))^(−β)` divided by the largest weight in the batch.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<(Vec<SampleIndex>, Vec<f64>)> {
        if n == 0 || self.len() < n {
            return Err(Error::contract(format!(
                "cannot sample {n} from a buffer of {}",
                self.len()
            )));
        }
        let total = self.tree.total();
        let size = self.len() as f64;
        let mut idx = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.random();
            let slot = self.tree.find(u * total).min(self.len() - 1);
            idx.push(SampleIndex {
                slot,
                serial: self.entries[slot].serial,
            });
            w.push((size * self.tree.get(slot) / total).powf(-beta));
        }
        let max = w.iter().cloned().fold(0.0, f64::max);
        for x in &mut w {
            *x /= max;
        }
        Ok((idx, w))
    }

    /// `priority = |δ| + ε` at each still-valid index; stale handles are
    /// skipped and counted.
    pub fn update_priorities(&mut self, idx: &[SampleIndex], td: &[f64]) -> Result<()> {
        if idx.len() != td.len() {
            return Err(Error::contract(
                "priority update needs one TD error per index",
            ));
        }
        for (i, d) in idx.iter().zip(td) {
            if i.slot >= self.len() || self.entries[i.slot].serial != i.serial {
                self.stale_updates += 1;
                continue;
            }
            if !d.is_finite() {
                return Err(Error::Numeric("non-finite TD error".into()));
            }
            self.set_priority(i.slot, d.abs() + self.per.eps);
        }
        Ok(())
    }

    /// Transition at `slot` with up to `window` history steps ending at `t + 1`.
    pub fn replay(&self, slot: usize, window: usize) -> Replayed {
        let e = &self.entries[slot];
        let h = &self.histories[&e.episode];
        let end = e.t + 1 - h.start;
        let begin = (end + 1).saturating_sub(window.max(2));
        Replayed {
            task: h.task,
            history: (begin..=end)
                .map(|k| (h.obs[k].clone(), h.mask[k]))
                .collect(),
            action: e.action.clone(),
            reward: e.reward,
            done: e.done,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(episode: u64, t: usize, reward: f64) -> Transition {
        Transition {
            task: TaskKind::Reach,
            episode,
            t,
            obs: vec![t as f64],
            mask: true,
            action: vec![0.0],
            reward,
            next_obs: vec![t as f64 + 1.0],
            next_mask: t % 2 == 0,
            done: false,
        }
    }

    fn filled(n: usize, cap: usize) -> ReplayBuffer {
        let mut b = ReplayBuffer::new(cap, PerParams::default()).unwrap();
        for t in 0..n {
            b.store(tr(0, t, t as f64)).unwrap();
        }
        b
    }

    #[test]
    fn first_insert_has_unit_priority() {
        let b = filled(1, 10);
        assert_eq!(b.len(), 1);
        assert_eq!(b.priority(0), 1.0);
    }

    #[test]
    fn ring_evicts_oldest() {
        let b = filled(3, 2);
        assert_eq!(b.len(), 2);
        let rewards: Vec<f64> = (0..2).map(|s| b.replay(s, 20).reward).collect();
        assert_eq!(rewards, vec![2.0, 1.0]);
    }

    #[test]
    fn new_entries_take_max_priority() {
        let mut b = filled(2, 10);
        let (idx, _) = b.sample(2, 0.4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        b.update_priorities(&idx[..1], &[4.0]).unwrap();
        b.store(tr(0, 2, 0.0)).unwrap();
        assert_eq!(b.priority(2), 4.0 + 1e-3);
    }

    #[test]
    fn proportional_frequencies() {
        let mut b = ReplayBuffer::new(
            4,
            PerParams {
                alpha: 1.0,
                eps: 1e-3,
            },
        )
        .unwrap();
        b.store(tr(0, 0, 0.0)).unwrap();
        b.store(tr(0, 1, 0.0)).unwrap();
        let idx = [
            SampleIndex { slot: 0, serial: 0 },
            SampleIndex { slot: 1, serial: 1 },
        ];
        b.update_priorities(&idx, &[1.0 - 1e-3, 3.0 - 1e-3])
            .unwrap();
        assert!((b.probability(0) - 0.25).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut hits = 0;
        for _ in 0..50_000 {
            let (s, _) = b.sample(2, 0.4, &mut rng).unwrap();
            hits += s.iter().filter(|i| i.slot == 0).count();
        }
        let f0 = hits as f64 / 1e5;
        assert!((f0 - 0.25).abs() < 0.01, "{f0}");
    }

    #[test]
    fn unit_weights_when_uniform_or_beta_zero() {
        let mut b = filled(5, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, w) = b.sample(5, 0.7, &mut rng).unwrap();
        assert!(w.iter().all(|&x| x == 1.0));
        let idx: Vec<SampleIndex> = (0..5)
            .map(|s| SampleIndex {
                slot: s,
                serial: s as u64,
            })
            .collect();
        b.update_priorities(&idx, &[0.1, 2.0, 0.0, 5.0, 0.3])
            .unwrap();
        for _ in 0..20 {
            let (_, w) = b.sample(5, 0.0, &mut rng).unwrap();
            assert!(w.iter().all(|&x| x == 1.0));
        }
        let mut any_below = false;
        for _ in 0..20 {
            let (_, w) = b.sample(5, 1.0, &mut rng).unwrap();
            any_below |= w.iter().any(|&x| x < 1.0);
            assert!(w.iter().all(|&x| x > 0.0 && x <= 1.0));
        }
        assert!(any_below);
    }

    #[test]
    fn priority_floor_and_locality() {
        let mut b = filled(3, 10);
        let idx = [SampleIndex { slot: 1, serial: 1 }];
        b.update_priorities(&idx, &[0.0]).unwrap();
        assert_eq!(b.priority(1), 1e-3);
        assert_eq!(b.priority(0), 1.0);
        assert_eq!(b.priority(2), 1.0);
        b.update_priorities(&idx, &[-2.5]).unwrap();
        assert_eq!(b.priority(1), 2.5 + 1e-3);
        assert!(b.priority(1) > b.priority(0));
    }

    #[test]
    fn stale_handles_are_skipped() {
        let mut b = filled(2, 2);
        let old = SampleIndex { slot: 0, serial: 0 };
        b.store(tr(0, 2, 0.0)).unwrap();
        b.update_priorities(&[old], &[9.0]).unwrap();
        assert_eq!(b.stale_updates, 1);
        assert_eq!(b.priority(0), 1.0);
    }

    #[test]
    fn underfull_sample_rejected() {
        let b = filled(2, 10);
        assert!(b.sample(3, 0.4, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn replay_windows_end_at_next_step() {
        let b = filled(30, 100);
        let r = b.replay(25, 20);
        assert_eq!(r.history.len(), 20);
        assert_eq!(r.history.last().unwrap().0, vec![26.0]);
        assert_eq!(r.history[r.history.len() - 2].0, vec![25.0]);
        let r = b.replay(0, 20);
        assert_eq!(r.history.len(), 2);
        assert_eq!(r.history[0], (vec![0.0], true));
        assert_eq!(r.history[1], (vec![1.0], true));
    }

    #[test]
    fn histories_released_with_their_transitions() {
        let mut b = ReplayBuffer::new(3, PerParams::default()).unwrap();
        b.store(tr(0, 0, 0.0)).unwrap();
        b.store(tr(1, 0, 0.0)).unwrap();
        b.store(tr(1, 1, 0.0)).unwrap();
        assert_eq!(b.episodes_held(), 2);
        b.store(tr(2, 0, 0.0)).unwrap();
        assert_eq!(b.episodes_held(), 2);
        assert!(b.store(tr(2, 5, 0.0)).is_err());
    }

    #[test]
    fn priorities_stay_positive() {
        let mut b = filled(20, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (idx, _) = b.sample(8, 0.5, &mut rng).unwrap();
            let td: Vec<f64> = (0..8)
                .map(|_| rng.random_range(-1.0..1.0) * rng.random_range(0.0..1.0))
                .collect();
            b.update_priorities(&idx, &td).unwrap();
        }
        assert!((0..20).all(|s| b.priority(s) > 0.0));
        let total: f64 = (0..20).map(|s| b.probability(s)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
