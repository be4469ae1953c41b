//! Observation masking, the encoder/observer/decoder stack, and packed
//! variable-length sequence encoding.

mod masking;
mod network;
mod normalize;

pub use masking::{mask_observation, MaskedObservation};
pub use network::{
    unit_gaussian_nll, BeliefDims, BeliefNet, BeliefState, DecoderParams, EncoderParams, LstmCell,
    ObserverCell, ObserverParams, PackedBeliefs, SsmCell, StateVars,
};
pub use normalize::ObsNormalizer;

use crate::diffmath::{Graph, Tensor};
use crate::error::{Error, Result};

fn row(v: &[f64]) -> Result<Tensor> {
    Tensor::new(&[1, v.len()], v.to_vec())
}

/// `e_t = f_φ(õ_t)` for a single observation.
pub fn encode_observation(enc: &EncoderParams, obs: &MaskedObservation) -> Result<Tensor> {
    let want = enc.mlp.input_dim();
    if obs.effective.len() != want {
        return Err(Error::dim(
            "encode_observation",
            &[obs.effective.len()],
            &[want],
        ));
    }
    let mut g = Graph::no_grad();
    let x = g.constant(row(&obs.effective)?);
    let e = enc.forward(&mut g, x)?;
    Ok(Tensor::vector(g.value(e).data().to_vec()))
}

/// One observer step from an encoding, followed by the belief projection.
pub fn observer_step(obs: &ObserverParams, e: &Tensor, prev: &BeliefState) -> Result<BeliefState> {
    if prev.cell.is_some() != obs.is_lstm() {
        return Err(Error::contract(
            "belief state does not match the observer variant",
        ));
    }
    let mut g = Graph::no_grad();
    let ev = g.constant(row(e.data())?);
    let h = obs.h_dim();
    let prev_vars = StateVars {
        hidden: g.constant(prev.hidden.clone().reshape(&[1, h])?),
        cell: match &prev.cell {
            Some(c) => Some(g.constant(c.clone().reshape(&[1, h])?)),
            None => None,
        },
    };
    let next = obs.cell_step(&mut g, ev, prev_vars)?;
    let b = obs.project(&mut g, next.hidden)?;
    let flat = |g: &Graph, v| Tensor::vector(g.value(v).data().to_vec());
    Ok(BeliefState {
        b: flat(&g, b),
        hidden: flat(&g, next.hidden),
        cell: next.cell.map(|c| flat(&g, c)),
    })
}

/// `F_{φ,ψ}`: encode then step.
pub fn belief_update(
    enc: &EncoderParams,
    obs_params: &ObserverParams,
    prev: &BeliefState,
    obs: &MaskedObservation,
) -> Result<BeliefState> {
    let e = encode_observation(enc, obs)?;
    observer_step(obs_params, &e, prev)
}

/// Predicted observation mean for a single belief.
pub fn decode_observation(dec: &DecoderParams, b: &Tensor) -> Result<Tensor> {
    let want = dec.mlp.input_dim();
    if b.len() != want {
        return Err(Error::dim("decode_observation", &[b.len()], &[want]));
    }
    let mut g = Graph::no_grad();
    let x = g.constant(row(b.data())?);
    let y = dec.forward(&mut g, x)?;
    Ok(Tensor::vector(g.value(y).data().to_vec()))
}
