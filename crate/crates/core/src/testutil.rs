//! Finite-difference gradient oracle shared by unit tests.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffmath::{Parameterized, Tensor};

/// Largest relative gap between `grads` and central differences of `f`
/// over up to `per_tensor` sampled entries of every parameter.
pub fn fd_max_rel_err<M: Parameterized + Clone>(
    model: &M,
    grads: &[Tensor],
    per_tensor: usize,
    f: impl Fn(&M) -> f64,
) -> f64 {
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n_params = model.params().len();
    assert_eq!(n_params, grads.len());
    let mut worst: f64 = 0.0;
    for p in 0..n_params {
        let len = model.params()[p].len();
        let picks: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            sample(&mut rng, len, per_tensor).into_vec()
        };
        for j in picks {
            let mut plus = model.clone();
            plus.params_mut()[p].data_mut()[j] += h;
            let mut minus = model.clone();
            minus.params_mut()[p].data_mut()[j] -= h;
            let num = (f(&plus) - f(&minus)) / (2.0 * h);
            let ana = grads[p].data()[j];
            let denom = ana.abs().max(num.abs()).max(1e-3);
            worst = worst.max((ana - num).abs() / denom);
        }
    }
    worst
}
