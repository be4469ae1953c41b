use rand::Rng;

use crate::diffmath::{prefixed, Graph, Linear, Mlp, Parameterized, Tensor, Var, HALF_LN_2PI};
use crate::error::{Error, Result};
use crate::variant::BeliefArch;

use super::masking::MaskedObservation;

/// Layer widths of the belief stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeliefDims {
    pub obs_dim: usize,
    pub enc_hidden: usize,
    pub e_dim: usize,
    pub h_dim: usize,
    pub b_dim: usize,
    pub dec_hidden: usize,
}

impl BeliefDims {
    pub fn new(obs_dim: usize, width: usize) -> Self {
        BeliefDims {
            obs_dim,
            enc_hidden: width,
            e_dim: width,
            h_dim: width,
            b_dim: width,
            dec_hidden: width,
        }
    }

    /// Full-size widths (128 everywhere).
    pub fn standard(obs_dim: usize) -> Self {
        Self::new(obs_dim, 128)
    }
}

/// Three-layer observation encoder `f_φ`: dense → LN → ReLU twice, then dense.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub mlp: Mlp,
}

impl EncoderParams {
    pub fn new<R: Rng + ?Sized>(dims: &BeliefDims, rng: &mut R) -> Self {
        EncoderParams {
            mlp: Mlp::new(
                &[dims.obs_dim, dims.enc_hidden, dims.enc_hidden, dims.e_dim],
                true,
                rng,
            ),
        }
    }

    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, x: Var) -> Result<Var> {
        self.mlp.forward(g, x)
    }
}

impl Parameterized for EncoderParams {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.mlp.named_params()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.mlp.named_params_mut()
    }
}

/// Single-layer LSTM cell, gates packed as `[i | f | g | o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub b: Tensor,
}

/// `h' = tanh(h·W_h + e·W_o + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmCell {
    pub w_h: Tensor,
    pub w_o: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObserverCell {
    Lstm(LstmCell),
    Ssm(SsmCell),
}

/// Recurrent observer `g_ψ` plus the projection from hidden state to belief.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverParams {
    pub cell: ObserverCell,
    pub proj: Linear,
}

/// Hidden state as graph nodes, `[m × h]` each.
#[derive(Debug, Clone, Copy)]
pub struct StateVars {
    pub hidden: Var,
    pub cell: Option<Var>,
}

impl ObserverParams {
    pub fn lstm<R: Rng + ?Sized>(e_dim: usize, h_dim: usize, b_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (h_dim as f64).sqrt();
        ObserverParams {
            cell: ObserverCell::Lstm(LstmCell {
                w_x: Tensor::uniform(&[e_dim, 4 * h_dim], bound, rng),
                w_h: Tensor::uniform(&[h_dim, 4 * h_dim], bound, rng),
                b: Tensor::uniform(&[4 * h_dim], bound, rng),
            }),
            proj: Linear::new(h_dim, b_dim, rng),
        }
    }

    pub fn ssm<R: Rng + ?Sized>(e_dim: usize, h_dim: usize, b_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (h_dim as f64).sqrt();
        ObserverParams {
            cell: ObserverCell::Ssm(SsmCell {
                w_h: Tensor::uniform(&[h_dim, h_dim], bound, rng),
                w_o: Tensor::uniform(&[e_dim, h_dim], 1.0 / (e_dim as f64).sqrt(), rng),
                b: Tensor::uniform(&[h_dim], bound, rng),
            }),
            proj: Linear::new(h_dim, b_dim, rng),
        }
    }

    pub fn is_lstm(&self) -> bool {
        matches!(self.cell, ObserverCell::Lstm(_))
    }

    pub fn h_dim(&self) -> usize {
        self.proj.fan_in()
    }

    pub fn b_dim(&self) -> usize {
        self.proj.fan_out()
    }

    pub fn zero_state(&self) -> BeliefState {
        let h = self.h_dim();
        BeliefState {
            b: Tensor::zeros(&[self.b_dim()]),
            hidden: Tensor::zeros(&[h]),
            cell: self.is_lstm().then(|| Tensor::zeros(&[h])),
        }
    }

    pub fn zero_state_vars(&self, g: &mut Graph, m: usize) -> StateVars {
        let h = self.h_dim();
        StateVars {
            hidden: g.constant(Tensor::zeros(&[m, h])),
            cell: self.is_lstm().then(|| g.constant(Tensor::zeros(&[m, h]))),
        }
    }

    /// One recurrence step on a batch of encodings `e: [m × e_dim]`.
    pub fn cell_step<'a>(
        &'a self,
        g: &mut Graph<'a>,
        e: Var,
        prev: StateVars,
    ) -> Result<StateVars> {
        match &self.cell {
            ObserverCell::Ssm(c) => {
                if prev.cell.is_some() {
                    return Err(Error::contract("SSM observer given an LSTM cell state"));
                }
                let w_h = g.param(&c.w_h);
                let w_o = g.param(&c.w_o);
                let b = g.param(&c.b);
                let hh = g.matmul(prev.hidden, w_h)?;
                let eo = g.matmul(e, w_o)?;
                let s = g.add(hh, eo)?;
                let s = g.add(s, b)?;
                Ok(StateVars {
                    hidden: g.tanh(s),
                    cell: None,
                })
            }
            ObserverCell::Lstm(c) => {
                let cprev = prev
                    .cell
                    .ok_or_else(|| Error::contract("LSTM observer needs a cell state"))?;
                let h = self.h_dim();
                let w_x = g.param(&c.w_x);
                let w_h = g.param(&c.w_h);
                let b = g.param(&c.b);
                let zx = g.matmul(e, w_x)?;
                let zh = g.matmul(prev.hidden, w_h)?;
                let z = g.add(zx, zh)?;
                let z = g.add(z, b)?;
                let zi = g.slice_cols(z, 0, h)?;
                let zf = g.slice_cols(z, h, h)?;
                let zg = g.slice_cols(z, 2 * h, h)?;
                let zo = g.slice_cols(z, 3 * h, h)?;
                let i = g.sigmoid(zi);
                let f = g.sigmoid(zf);
                let gg = g.tanh(zg);
                let o = g.sigmoid(zo);
                let fc = g.mul(f, cprev)?;
                let ig = g.mul(i, gg)?;
                let cnew = g.add(fc, ig)?;
                let tc = g.tanh(cnew);
                let hnew = g.mul(o, tc)?;
                Ok(StateVars {
                    hidden: hnew,
                    cell: Some(cnew),
                })
            }
        }
    }

    pub fn project<'a>(&'a self, g: &mut Graph<'a>, hidden: Var) -> Result<Var> {
        self.proj.forward(g, hidden)
    }
}

impl Parameterized for ObserverParams {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = match &self.cell {
            ObserverCell::Lstm(c) => vec![
                ("lstm.w_x".to_string(), &c.w_x),
                ("lstm.w_h".to_string(), &c.w_h),
                ("lstm.b".to_string(), &c.b),
            ],
            ObserverCell::Ssm(c) => vec![
                ("ssm.w_h".to_string(), &c.w_h),
                ("ssm.w_o".to_string(), &c.w_o),
                ("ssm.b".to_string(), &c.b),
            ],
        };
        out.extend(prefixed("proj", self.proj.named_params()));
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = match &mut self.cell {
            ObserverCell::Lstm(c) => vec![
                ("lstm.w_x".to_string(), &mut c.w_x),
                ("lstm.w_h".to_string(), &mut c.w_h),
                ("lstm.b".to_string(), &mut c.b),
            ],
            ObserverCell::Ssm(c) => vec![
                ("ssm.w_h".to_string(), &mut c.w_h),
                ("ssm.w_o".to_string(), &mut c.w_o),
                ("ssm.b".to_string(), &mut c.b),
            ],
        };
        out.extend(prefixed("proj", self.proj.named_params_mut()));
        out
    }
}

/// Belief `b_t` together with the recurrent state that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub b: Tensor,
    pub hidden: Tensor,
    pub cell: Option<Tensor>,
}

/// Observation decoder `p_ξ`: belief → mean of a unit-variance Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub mlp: Mlp,
}

impl DecoderParams {
    pub fn new<R: Rng + ?Sized>(b_dim: usize, hidden: usize, obs_dim: usize, rng: &mut R) -> Self {
        DecoderParams {
            mlp: Mlp::new(&[b_dim, hidden, hidden, obs_dim], false, rng),
        }
    }

    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, b: Var) -> Result<Var> {
        self.mlp.forward(g, b)
    }
}

impl Parameterized for DecoderParams {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.mlp.named_params()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.mlp.named_params_mut()
    }
}

/// Mean over rows of the unit-variance Gaussian NLL `½‖o − μ‖² + (d/2)·ln 2π`.
pub fn unit_gaussian_nll(g: &mut Graph, mean: Var, target: Var) -> Result<Var> {
    let d = *g.shape(mean).last().unwrap_or(&1) as f64;
    let r = g.sub(mean, target)?;
    let r2 = g.square(r);
    let per = if g.value(r2).rank() <= 1 {
        g.sum(r2)
    } else {
        let s = g.sum_cols(r2)?;
        g.mean(s)
    };
    let half = g.scale(per, 0.5);
    Ok(g.add_scalar(half, d * HALF_LN_2PI))
}

/// The composed map `F_{φ,ψ}` from masked observations to beliefs.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefNet {
    pub arch: BeliefArch,
    pub dims: BeliefDims,
    pub encoder: Option<EncoderParams>,
    pub observer: Option<ObserverParams>,
}

/// Beliefs for a batch of sequences packed time-major into `[total × b_dim]`.
#[derive(Debug, Clone)]
pub struct PackedBeliefs {
    pub beliefs: Var,
    /// Row of step 0 for each time index; the active sequences at time `t`
    /// occupy `offsets[t] .. offsets[t] + active[t]`.
    pub offsets: Vec<usize>,
    pub active: Vec<usize>,
    /// `rank[i]`: position of sequence `i` within each time slice.
    pub rank: Vec<usize>,
    pub lengths: Vec<usize>,
}

impl PackedBeliefs {
    pub fn row(&self, seq: usize, t: usize) -> usize {
        debug_assert!(t < self.lengths[seq]);
        self.offsets[t] + self.rank[seq]
    }

    pub fn total(&self) -> usize {
        self.lengths.iter().sum()
    }
}

impl BeliefNet {
    pub fn new<R: Rng + ?Sized>(arch: BeliefArch, dims: BeliefDims, rng: &mut R) -> Self {
        let (encoder, observer) = match arch {
            BeliefArch::Identity => (None, None),
            BeliefArch::EncoderOnly => (Some(EncoderParams::new(&dims, rng)), None),
            BeliefArch::Lstm => {
                let enc = EncoderParams::new(&dims, rng);
                (
                    Some(enc),
                    Some(ObserverParams::lstm(
                        dims.e_dim, dims.h_dim, dims.b_dim, rng,
                    )),
                )
            }
            BeliefArch::Ssm => {
                let enc = EncoderParams::new(&dims, rng);
                (
                    Some(enc),
                    Some(ObserverParams::ssm(dims.e_dim, dims.h_dim, dims.b_dim, rng)),
                )
            }
        };
        BeliefNet {
            arch,
            dims,
            encoder,
            observer,
        }
    }

    /// Width of the vector handed to the policy.
    pub fn belief_dim(&self) -> usize {
        match self.arch {
            BeliefArch::Identity => self.dims.obs_dim,
            BeliefArch::EncoderOnly => self.dims.e_dim,
            _ => self.dims.b_dim,
        }
    }

    pub fn is_trainable(&self) -> bool {
        self.encoder.is_some()
    }

    pub fn zero_state(&self) -> BeliefState {
        match &self.observer {
            Some(o) => o.zero_state(),
            None => BeliefState {
                b: Tensor::zeros(&[self.belief_dim()]),
                hidden: Tensor::zeros(&[0]),
                cell: None,
            },
        }
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.dims.obs_dim {
            return Err(Error::dim(
                "encode_observation",
                &[width],
                &[self.dims.obs_dim],
            ));
        }
        Ok(())
    }

    /// `e = f_φ(x)` for rows of effective observations; identity without an encoder.
    pub fn encode<'a>(&'a self, g: &mut Graph<'a>, x: Var) -> Result<Var> {
        let s = g.shape(x);
        self.check_input(*s.last().unwrap_or(&0))?;
        match &self.encoder {
            Some(enc) => enc.forward(g, x),
            None => Ok(x),
        }
    }

    /// One step of the composition `g_ψ(f_φ(x), state)` over a batch. Returns
    /// the new belief rows and the new state (unchanged for stateless archs).
    pub fn step_vars<'a>(
        &'a self,
        g: &mut Graph<'a>,
        x: Var,
        prev: StateVars,
    ) -> Result<(Var, StateVars)> {
        let e = self.encode(g, x)?;
        match &self.observer {
            Some(o) => {
                let next = o.cell_step(g, e, prev)?;
                let b = o.project(g, next.hidden)?;
                Ok((b, next))
            }
            None => Ok((e, prev)),
        }
    }

    pub fn zero_state_vars(&self, g: &mut Graph, m: usize) -> StateVars {
        match &self.observer {
            Some(o) => o.zero_state_vars(g, m),
            None => StateVars {
                hidden: g.constant(Tensor::zeros(&[m, 0])),
                cell: None,
            },
        }
    }

    /// Single-step belief update outside any training graph.
    pub fn belief_update(
        &self,
        prev: &BeliefState,
        obs: &MaskedObservation,
    ) -> Result<BeliefState> {
        self.check_input(obs.effective.len())?;
        let mut g = Graph::no_grad();
        let x = g.constant(Tensor::new(
            &[1, obs.effective.len()],
            obs.effective.clone(),
        )?);
        let prev_vars = self.state_to_vars(&mut g, prev)?;
        let (b, next) = self.step_vars(&mut g, x, prev_vars)?;
        Ok(self.vars_to_state(&g, b, next))
    }

    pub(crate) fn state_to_vars(&self, g: &mut Graph, s: &BeliefState) -> Result<StateVars> {
        let lstm = self.observer.as_ref().is_some_and(|o| o.is_lstm());
        if lstm != s.cell.is_some() {
            return Err(Error::contract(
                "belief state does not match the observer variant",
            ));
        }
        let h = s.hidden.len();
        Ok(StateVars {
            hidden: g.constant(s.hidden.clone().reshape(&[1, h])?),
            cell: match &s.cell {
                Some(c) => Some(g.constant(c.clone().reshape(&[1, h])?)),
                None => None,
            },
        })
    }

    pub(crate) fn vars_to_state(&self, g: &Graph, b: Var, s: StateVars) -> BeliefState {
        let flat = |v: Var| Tensor::vector(g.value(v).data().to_vec());
        BeliefState {
            b: flat(b),
            hidden: flat(s.hidden),
            cell: s.cell.map(flat),
        }
    }

    /// Beliefs for every step of every sequence, starting from the zero state.
    ///
    /// Sequences are processed together: at each time index only those still
    /// running take part, so no padded step reaches an output or a gradient.
    /// `truncate = Some(k)` cuts the gradient through the recurrent state every
    /// `k` steps while leaving forward values unchanged.
    pub fn encode_sequence_batch<'a>(
        &'a self,
        g: &mut Graph<'a>,
        sequences: &[&[Vec<f64>]],
        truncate: Option<usize>,
    ) -> Result<PackedBeliefs> {
        if sequences.is_empty() || sequences.iter().any(|s| s.is_empty()) {
            return Err(Error::contract(
                "encode_sequence_batch needs non-empty sequences",
            ));
        }
        let lengths: Vec<usize> = sequences.iter().map(|s| s.len()).collect();
        let mut order: Vec<usize> = (0..sequences.len()).collect();
        order.sort_by(|&a, &b| lengths[b].cmp(&lengths[a]));
        let mut rank = vec![0; sequences.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let max_len = lengths[order[0]];
        let active: Vec<usize> = (0..max_len)
            .map(|t| lengths.iter().filter(|&&l| l > t).count())
            .collect();
        let mut offsets = Vec::with_capacity(max_len);
        let mut total = 0;
        for &n in &active {
            offsets.push(total);
            total += n;
        }

        let d = self.dims.obs_dim;
        let mut data = Vec::with_capacity(total * d);
        for (t, &n) in active.iter().enumerate() {
            for &i in &order[..n] {
                let x = &sequences[i][t];
                self.check_input(x.len())?;
                data.extend_from_slice(x);
            }
        }
        let x = g.constant(Tensor::new(&[total, d], data)?);
        let e = self.encode(g, x)?;

        let beliefs = match &self.observer {
            None => e,
            Some(o) => {
                let mut state = o.zero_state_vars(g, active[0]);
                let mut hiddens = Vec::with_capacity(max_len);
                for t in 0..max_len {
                    let n = active[t];
                    if t > 0 && truncate.is_some_and(|k| k > 0 && t % k == 0) {
                        state = StateVars {
                            hidden: g.detach(state.hidden),
                            cell: state.cell.map(|c| g.detach(c)),
                        };
                    }
                    if g.shape(state.hidden)[0] != n {
                        state = StateVars {
                            hidden: g.slice_rows(state.hidden, 0, n)?,
                            cell: match state.cell {
                                Some(c) => Some(g.slice_rows(c, 0, n)?),
                                None => None,
                            },
                        };
                    }
                    let et = g.slice_rows(e, offsets[t], n)?;
                    state = o.cell_step(g, et, state)?;
                    hiddens.push(state.hidden);
                }
                let h = if hiddens.len() == 1 {
                    hiddens[0]
                } else {
                    g.concat_rows(&hiddens)?
                };
                o.project(g, h)?
            }
        };
        Ok(PackedBeliefs {
            beliefs,
            offsets,
            active,
            rank,
            lengths,
        })
    }
}

impl Parameterized for BeliefNet {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        if let Some(e) = &self.encoder {
            out.extend(prefixed("enc", e.named_params()));
        }
        if let Some(o) = &self.observer {
            out.extend(prefixed("obs", o.named_params()));
        }
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        if let Some(e) = &mut self.encoder {
            out.extend(prefixed("enc", e.named_params_mut()));
        }
        if let Some(o) = &mut self.observer {
            out.extend(prefixed("obs", o.named_params_mut()));
        }
        out
    }
}
