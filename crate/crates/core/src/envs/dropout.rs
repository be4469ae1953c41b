use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tasks::{EnvState, Task};
use crate::belief::{mask_observation, MaskedObservation};
use crate::error::{Error, Result};

/// Intermittent-observability process: each step's observation is kept with
/// probability `p` and replaced by zeros otherwise.
///
/// Masks come from `u < p` with `u ~ U[0, 1)`, one draw per step whether or
/// not the step is forced, so runs at different `p` over the same seed see
/// nested sets of dropped steps.
#[derive(Debug, Clone)]
pub struct DropoutWrapper {
    pub p: f64,
    pub force_first_observation: bool,
    rng: ChaCha8Rng,
}

impl DropoutWrapper {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(format!(
                "observation probability {p} outside [0, 1]"
            )));
        }
        Ok(DropoutWrapper {
            p,
            force_first_observation: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn with_force_first(mut self, force: bool) -> Self {
        self.force_first_observation = force;
        self
    }

    pub fn draw_mask(&mut self, t: usize) -> bool {
        let u: f64 = self.rng.random();
        (t == 0 && self.force_first_observation) || u < self.p
    }

    pub fn observe(&mut self, task: &Task, state: &EnvState) -> MaskedObservation {
        let mask = self.draw_mask(state.t);
        mask_observation(task.observe_raw(state), mask)
            .expect("simulator emits finite observations")
    }
}
