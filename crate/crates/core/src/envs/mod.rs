//! Toy continuous-control tasks with sparse rewards, scripted experts, and
//! the observation-dropout process.

mod demos;
mod dropout;
mod tasks;

pub use demos::{collect_demos, read_demos, run_episode, write_demos, DemoHeader, EpisodeRecord};
pub use dropout::DropoutWrapper;
pub use tasks::{
    make_task, EnvState, StepOutcome, Task, TaskKind, TaskSpec, DT, EXPERT_ACTION_LIMIT, HORIZON,
    MAX_SPEED, STEP_CLIP,
};
