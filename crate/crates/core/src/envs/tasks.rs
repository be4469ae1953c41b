use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const HORIZON: usize = 50;
pub const DT: f64 = 0.1;
/// Velocity per unit action.
pub const MAX_SPEED: f64 = 1.5;
/// Largest displacement allowed in a single step.
pub const STEP_CLIP: f64 = 0.15;
/// Expert actions stay this far inside the action box so their pre-squash
/// inverse is well conditioned.
pub const EXPERT_ACTION_LIMIT: f64 = 0.95;

const REACH_RADIUS: f64 = 0.05;
const PUSH_RADIUS: f64 = 0.07;
const CONTACT_RADIUS: f64 = 0.1;
const PUSH_SUBSTEPS: usize = 10;
const GRAB_RADIUS: f64 = 0.05;
const DRAWER_CLOSED: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    Reach,
    Push,
    MemoryReach,
    LatchDrawer,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Reach,
        TaskKind::Push,
        TaskKind::MemoryReach,
        TaskKind::LatchDrawer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Reach => "reach",
            TaskKind::Push => "push",
            TaskKind::MemoryReach => "memory-reach",
            TaskKind::LatchDrawer => "latch-drawer",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown task '{s}' (expected reach, push, memory-reach or latch-drawer)"
                ))
            })
    }
}

/// Static description of a task: the `(S, A, O, T, R, Ω, γ)` tuple plus horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub state_dim: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub gamma: f64,
    pub horizon: usize,
}

/// Full simulator state. `s` layout is task specific:
/// reach / memory-reach `[ax, ay, gx, gy]`, push `[ax, ay, px, py, gx, gy]`,
/// latch-drawer `[x, drawer, latched]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub t: usize,
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    /// The action had components outside `[-1, 1]` and was clipped.
    pub clipped: bool,
}

#[derive(Debug, Clone)]
pub struct Task {
    pub spec: TaskSpec,
    pub seed: u64,
}

pub fn make_task(name: &str, seed: u64) -> Result<Task> {
    Ok(Task::new(name.parse()?, seed))
}

impl Task {
    pub fn new(kind: TaskKind, seed: u64) -> Self {
        let (state_dim, obs_dim) = match kind {
            TaskKind::Reach | TaskKind::MemoryReach => (4, 4),
            TaskKind::Push => (6, 6),
            TaskKind::LatchDrawer => (3, 3),
        };
        Task {
            spec: TaskSpec {
                kind,
                state_dim,
                obs_dim,
                action_dim: 2,
                gamma: 0.99,
                horizon: HORIZON,
            },
            seed,
        }
    }

    pub fn kind(&self) -> TaskKind {
        self.spec.kind
    }

    pub fn obs_dim(&self) -> usize {
        self.spec.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.spec.action_dim
    }

    /// Initial state of the `episode`-th episode under this task's seed.
    pub fn reset_episode(&self, episode: u64) -> EnvState {
        self.reset(derive_seed(self.seed, episode))
    }

    pub fn reset(&self, seed: u64) -> EnvState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pt = |lo: f64, hi: f64| [rng.random_range(lo..hi), rng.random_range(lo..hi)];
        let s = match self.spec.kind {
            TaskKind::Reach | TaskKind::MemoryReach => loop {
                let a = pt(-1.0, 1.0);
                let g = pt(-1.0, 1.0);
                if dist(&a, &g) >= 0.3 {
                    break vec![a[0], a[1], g[0], g[1]];
                }
            },
            TaskKind::Push => loop {
                let a = pt(-1.0, 1.0);
                let p = pt(-0.5, 0.5);
                let g = pt(-0.7, 0.7);
                if dist(&g, &p) >= 0.3 && dist(&a, &p) >= 0.3 {
                    break vec![a[0], a[1], p[0], p[1], g[0], g[1]];
                }
            },
            TaskKind::LatchDrawer => loop {
                let [x, d] = pt(0.0, 1.0);
                let (x, d) = (2.0 * x - 1.0, 0.5 * d);
                if (x - d).abs() >= 0.2 {
                    break vec![x, d, 0.0];
                }
            },
        };
        EnvState { t: 0, s }
    }

    pub fn is_success(&self, state: &EnvState) -> bool {
        let s = &state.s;
        match self.spec.kind {
            TaskKind::Reach | TaskKind::MemoryReach => dist(&s[0..2], &s[2..4]) < REACH_RADIUS,
            TaskKind::Push => dist(&s[2..4], &s[4..6]) < PUSH_RADIUS,
            TaskKind::LatchDrawer => s[1] > DRAWER_CLOSED,
        }
    }

    /// Deterministic transition. Reward is 1 on the success step, 0 otherwise;
    /// the episode ends on success or at the horizon.
    pub fn step(&self, state: &EnvState, action: &[f64]) -> StepOutcome {
        let clipped = action.iter().any(|a| !(-1.0..=1.0).contains(a));
        let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let mut s = state.s.clone();
        match self.spec.kind {
            TaskKind::Reach | TaskKind::MemoryReach => {
                let d = displacement(&a);
                s[0] = (s[0] + d[0]).clamp(-1.0, 1.0);
                s[1] = (s[1] + d[1]).clamp(-1.0, 1.0);
            }
            TaskKind::Push => {
                let d = displacement(&a);
                // sub-stepped so a full-speed step cannot tunnel through the puck
                for _ in 0..PUSH_SUBSTEPS {
                    s[0] = (s[0] + d[0] / PUSH_SUBSTEPS as f64).clamp(-1.0, 1.0);
                    s[1] = (s[1] + d[1] / PUSH_SUBSTEPS as f64).clamp(-1.0, 1.0);
                    let (rx, ry) = (s[2] - s[0], s[3] - s[1]);
                    let r = (rx * rx + ry * ry).sqrt();
                    if r < CONTACT_RADIUS {
                        // puck is shoved out to the contact radius
                        let (ux, uy) = if r > 1e-12 {
                            (rx / r, ry / r)
                        } else {
                            let n = (d[0] * d[0] + d[1] * d[1]).sqrt().max(1e-12);
                            (d[0] / n, d[1] / n)
                        };
                        s[2] = s[0] + ux * CONTACT_RADIUS;
                        s[3] = s[1] + uy * CONTACT_RADIUS;
                    }
                }
            }
            TaskKind::LatchDrawer => {
                let dx = (a[0] * MAX_SPEED * DT).clamp(-STEP_CLIP, STEP_CLIP);
                let x = (s[0] + dx).clamp(-1.0, 1.0);
                let grip = a[1] > 0.0;
                let latched = grip && (s[2] > 0.5 || (x - s[1]).abs() < GRAB_RADIUS);
                if latched {
                    s[1] = x.clamp(0.0, 1.0);
                    s[0] = s[1];
                } else {
                    s[0] = x;
                }
                s[2] = if latched { 1.0 } else { 0.0 };
            }
        }
        let next = EnvState { t: state.t + 1, s };
        let success = self.is_success(&next);
        let done = success || next.t >= self.spec.horizon;
        StepOutcome {
            state: next,
            reward: if success { 1.0 } else { 0.0 },
            done,
            success,
            clipped,
        }
    }

    /// Raw observation `o_t` produced by Ω before any dropout.
    pub fn observe_raw(&self, state: &EnvState) -> Vec<f64> {
        match self.spec.kind {
            TaskKind::MemoryReach if state.t >= 1 => {
                vec![state.s[0], state.s[1], 0.0, 0.0]
            }
            _ => state.s.clone(),
        }
    }

    /// Scripted controller with full state access.
    pub fn expert(&self, state: &EnvState) -> Vec<f64> {
        let s = &state.s;
        match self.spec.kind {
            TaskKind::Reach | TaskKind::MemoryReach => toward(&s[0..2], &s[2..4]),
            TaskKind::Push => push_expert(s),
            TaskKind::LatchDrawer => {
                let (x, d, latched) = (s[0], s[1], s[2] > 0.5);
                if latched {
                    vec![EXPERT_ACTION_LIMIT, EXPERT_ACTION_LIMIT]
                } else {
                    let mv = ((d - x) / STEP_CLIP).clamp(-EXPERT_ACTION_LIMIT, EXPERT_ACTION_LIMIT);
                    let arrives = ((x + mv * STEP_CLIP) - d).abs() < GRAB_RADIUS;
                    let grip = if arrives {
                        EXPERT_ACTION_LIMIT
                    } else {
                        -EXPERT_ACTION_LIMIT
                    };
                    vec![mv, grip]
                }
            }
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-step displacement of a point mass: `v = MAX_SPEED·a`, `Δx = v·DT`,
/// with the step length clipped to `STEP_CLIP`.
fn displacement(a: &[f64]) -> [f64; 2] {
    let d = [a[0] * MAX_SPEED * DT, a[1] * MAX_SPEED * DT];
    let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if n > STEP_CLIP {
        [d[0] * STEP_CLIP / n, d[1] * STEP_CLIP / n]
    } else {
        d
    }
}

/// Proportional velocity command that lands on `target` when it is in reach.
fn toward(pos: &[f64], target: &[f64]) -> Vec<f64> {
    pos.iter()
        .zip(target)
        .map(|(p, t)| ((t - p) / STEP_CLIP).clamp(-EXPERT_ACTION_LIMIT, EXPERT_ACTION_LIMIT))
        .collect()
}

/// Like `toward` but scales both axes together so the heading is kept.
fn toward_heading(pos: &[f64], target: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = pos
        .iter()
        .zip(target)
        .map(|(p, t)| (t - p) / STEP_CLIP)
        .collect();
    let m = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let k = if m > EXPERT_ACTION_LIMIT {
        EXPERT_ACTION_LIMIT / m
    } else {
        1.0
    };
    raw.iter().map(|v| v * k).collect()
}

fn push_expert(s: &[f64]) -> Vec<f64> {
    let agent = [s[0], s[1]];
    let puck = [s[2], s[3]];
    let goal = [s[4], s[5]];
    let n = dist(&puck, &goal).max(1e-9);
    let dir = [(goal[0] - puck[0]) / n, (goal[1] - puck[1]) / n];

    let rel = [puck[0] - agent[0], puck[1] - agent[1]];
    let along = rel[0] * dir[0] + rel[1] * dir[1];
    let lateral = (rel[0] * dir[1] - rel[1] * dir[0]).abs();

    if along > 0.0 && along < CONTACT_RADIUS + 0.05 && lateral < 0.03 {
        // pushing: drive the agent to the spot that parks the puck on the goal
        let target = [
            goal[0] - dir[0] * CONTACT_RADIUS,
            goal[1] - dir[1] * CONTACT_RADIUS,
        ];
        return toward_heading(&agent, &target);
    }

    let orbit = CONTACT_RADIUS + 0.04;
    let behind = [puck[0] - dir[0] * orbit, puck[1] - dir[1] * orbit];
    let r = dist(&agent, &puck);
    if r < orbit - 0.01 {
        // back away radially before circling
        let k = orbit / r.max(1e-9);
        let out = [puck[0] - rel[0] * k, puck[1] - rel[1] * k];
        return toward_heading(&agent, &out);
    }
    let seg = [behind[0] - agent[0], behind[1] - agent[1]];
    let seg_len2 = (seg[0] * seg[0] + seg[1] * seg[1]).max(1e-12);
    let tproj = ((rel[0] * seg[0] + rel[1] * seg[1]) / seg_len2).clamp(0.0, 1.0);
    let closest = [agent[0] + seg[0] * tproj, agent[1] + seg[1] * tproj];
    if dist(&closest, &puck) > CONTACT_RADIUS + 0.01 {
        return toward_heading(&agent, &behind);
    }
    // circle the puck toward the side opposite the goal
    let theta = (-rel[1]).atan2(-rel[0]);
    let phi = (-dir[1]).atan2(-dir[0]);
    let mut diff = phi - theta;
    while diff > std::f64::consts::PI {
        diff -= 2.0 * std::f64::consts::PI;
    }
    while diff < -std::f64::consts::PI {
        diff += 2.0 * std::f64::consts::PI;
    }
    let next = theta + diff.signum() * diff.abs().min(0.8);
    let wp = [
        puck[0] + (orbit + 0.02) * next.cos(),
        puck[1] + (orbit + 0.02) * next.sin(),
    ];
    toward_heading(&agent, &wp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_task_is_config_error() {
        assert!(matches!(make_task("pick", 0), Err(Error::Config(_))));
    }

    #[test]
    fn reach_reset_contract() {
        let task = make_task("reach", 3).unwrap();
        for i in 0..200 {
            let st = task.reset_episode(i);
            assert!(st.s.iter().all(|v| (-1.0..=1.0).contains(v)));
            assert!(dist(&st.s[0..2], &st.s[2..4]) >= 0.3);
        }
    }

    #[test]
    fn agent_on_goal_is_success() {
        let task = make_task("reach", 0).unwrap();
        let st = EnvState {
            t: 3,
            s: vec![0.2, 0.2, 0.2, 0.2],
        };
        let out = task.step(&st, &[0.0, 0.0]);
        assert!(out.success && out.done);
        assert_eq!(out.reward, 1.0);
    }

    #[test]
    fn zero_action_is_stationary() {
        let task = make_task("reach", 0).unwrap();
        let st = EnvState {
            t: 0,
            s: vec![0.5, -0.5, -0.5, 0.5],
        };
        let out = task.step(&st, &[0.0, 0.0]);
        assert_eq!(&out.state.s[0..2], &[0.5, -0.5]);
        assert_eq!(out.reward, 0.0);
        assert!(!out.done);
    }

    #[test]
    fn max_action_from_point_three_succeeds_in_two_steps() {
        // 0.3 → 0.15 → 0.0 at 0.15 per step
        let task = make_task("reach", 0).unwrap();
        let mut st = EnvState {
            t: 0,
            s: vec![0.0, 0.0, 0.3, 0.0],
        };
        let mut steps = 0;
        loop {
            let out = task.step(&st, &[1.0, 0.0]);
            steps += 1;
            if out.success {
                break;
            }
            assert!(steps < 3);
            st = out.state;
        }
        assert_eq!(steps, 2);

        // diagonal max action: step length is clipped, direction kept
        let d = displacement(&[1.0, 1.0]);
        assert!(((d[0] * d[0] + d[1] * d[1]).sqrt() - STEP_CLIP).abs() < 1e-12);
    }

    #[test]
    fn out_of_box_actions_are_clipped_and_flagged() {
        let task = make_task("reach", 0).unwrap();
        let st = task.reset(1);
        let a = task.step(&st, &[3.0, -7.0]);
        let b = task.step(&st, &[1.0, -1.0]);
        assert!(a.clipped && !b.clipped);
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn memory_reach_hides_goal_after_first_step() {
        let task = make_task("memory-reach", 0).unwrap();
        let st = task.reset(5);
        assert_eq!(task.observe_raw(&st), st.s);
        let nxt = task.step(&st, &[0.1, 0.1]).state;
        let o = task.observe_raw(&nxt);
        assert_eq!(&o[2..], &[0.0, 0.0]);
        assert_eq!(&o[..2], &nxt.s[..2]);
    }

    #[test]
    fn horizon_ends_episode() {
        let task = make_task("reach", 0).unwrap();
        let mut st = EnvState {
            t: 0,
            s: vec![-1.0, -1.0, 1.0, 1.0],
        };
        for t in 0..HORIZON {
            let out = task.step(&st, &[-1.0, -1.0]);
            assert_eq!(out.done, t + 1 == HORIZON);
            st = out.state;
        }
    }

    #[test]
    fn dynamics_are_deterministic() {
        for kind in TaskKind::ALL {
            let task = Task::new(kind, 9);
            let st = task.reset(11);
            let a = [0.3, -0.8];
            assert_eq!(task.step(&st, &a), task.step(&st, &a));
        }
    }

    #[test]
    fn expert_at_goal_is_idle() {
        let task = make_task("reach", 0).unwrap();
        let st = EnvState {
            t: 0,
            s: vec![0.4, -0.1, 0.4, -0.1],
        };
        assert!(task.expert(&st).iter().all(|a| a.abs() < 1e-12));
    }

    fn expert_success_rate(kind: TaskKind) -> f64 {
        let task = Task::new(kind, 2024);
        let mut ok = 0;
        for ep in 0..100 {
            let mut st = task.reset_episode(ep);
            for _ in 0..HORIZON {
                let a = task.expert(&st);
                assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
                let out = task.step(&st, &a);
                st = out.state;
                if out.success {
                    ok += 1;
                    break;
                }
                if out.done {
                    break;
                }
            }
        }
        ok as f64 / 100.0
    }

    #[test]
    fn experts_solve_their_tasks() {
        for kind in TaskKind::ALL {
            let rate = expert_success_rate(kind);
            assert!(rate >= 0.95, "{kind}: {rate}");
        }
    }
}
