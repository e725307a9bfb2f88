use serde::{Deserialize, Serialize};

use super::init::{glorot_uniform, orthogonal};
use super::{activate, Activation};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::rng::DetRng;

const GATES: [&str; 4] = ["i", "f", "o", "c"];
const FORGET: usize = 1;

/// Weights of one LSTM direction, gates ordered input, forget, output,
/// candidate. No peephole connections.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w: [ParamId; 4],
    pub u: [ParamId; 4],
    pub b: [ParamId; 4],
    pub input_size: usize,
    pub state_size: usize,
}

impl LstmParams {
    /// Glorot input weights, orthogonal recurrent weights, zero biases except
    /// the forget gate at 1.
    pub fn register(store: &mut ParamStore, prefix: &str, input_size: usize, state_size: usize, rng: &mut DetRng) -> Result<Self> {
        let mut w = Vec::with_capacity(4);
        let mut u = Vec::with_capacity(4);
        let mut b = Vec::with_capacity(4);
        for (gi, gate) in GATES.iter().enumerate() {
            let wt = glorot_uniform(&[state_size, input_size], input_size, state_size, &mut rng.split_named(&format!("{prefix}.W_{gate}")));
            w.push(store.add(format!("{prefix}.W_{gate}"), wt, true)?);
            let ut = orthogonal(state_size, &mut rng.split_named(&format!("{prefix}.U_{gate}")));
            u.push(store.add(format!("{prefix}.U_{gate}"), ut, true)?);
            let bias = if gi == FORGET { 1.0 } else { 0.0 };
            b.push(store.add(format!("{prefix}.b_{gate}"), Tensor::filled(&[state_size], bias), true)?);
        }
        Ok(LstmParams {
            w: w.try_into().expect("4 gates"),
            u: u.try_into().expect("4 gates"),
            b: b.try_into().expect("4 gates"),
            input_size,
            state_size,
        })
    }

    pub fn all_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.w.iter().chain(&self.u).chain(&self.b).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiLstmParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BiLstmParams {
    pub fn register(store: &mut ParamStore, prefix: &str, input_size: usize, state_size: usize, rng: &mut DetRng) -> Result<Self> {
        Ok(BiLstmParams {
            fwd: LstmParams::register(store, &format!("{prefix}.fwd"), input_size, state_size, rng)?,
            bwd: LstmParams::register(store, &format!("{prefix}.bwd"), input_size, state_size, rng)?,
        })
    }

    pub fn output_size(&self) -> usize {
        self.fwd.state_size + self.bwd.state_size
    }

    pub fn all_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.fwd.all_ids().chain(self.bwd.all_ids())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros(g: &mut Graph<'_>, state_size: usize) -> Self {
        let h = g.input(Tensor::zeros(&[state_size]));
        let c = g.input(Tensor::zeros(&[state_size]));
        LstmState { h, c }
    }
}

/// One recurrence step:
/// `i,f,o = σ(W x + U h + b)`, `ĉ = act(W_c x + U_c h + b_c)`,
/// `c' = f⊙c + i⊙ĉ`, `h' = o⊙tanh(c')`.
pub fn lstm_cell(g: &mut Graph<'_>, p: &LstmParams, x: Var, prev: LstmState, candidate: Activation) -> Result<LstmState> {
    let xs = g.value(x).shape();
    if xs != [p.input_size] {
        return Err(Error::Shape {
            op: "lstm_cell",
            lhs: xs.to_vec(),
            rhs: vec![p.input_size],
        });
    }
    let mut gates = [x; 4];
    for (k, gate) in gates.iter_mut().enumerate() {
        let w = g.param(p.w[k]);
        let u = g.param(p.u[k]);
        let b = g.param(p.b[k]);
        let wx = g.matmul(w, x)?;
        let uh = g.matmul(u, prev.h)?;
        let pre = g.add_all(&[wx, uh, b])?;
        *gate = if k == 3 { activate(g, pre, candidate) } else { g.sigmoid(pre) };
    }
    let [i, f, o, c_hat] = gates;
    let keep = g.mul(f, prev.c)?;
    let write = g.mul(i, c_hat)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// Hidden states for every position, returned in input order. With
/// `reverse` the recurrence runs from the last position to the first.
pub fn run_lstm(g: &mut Graph<'_>, p: &LstmParams, xs: &[Var], reverse: bool, candidate: Activation) -> Result<Vec<Var>> {
    let mut state = LstmState::zeros(g, p.state_size);
    let mut out = vec![state.h; xs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..xs.len()).rev())
    } else {
        Box::new(0..xs.len())
    };
    for t in order {
        state = lstm_cell(g, p, xs[t], state, candidate)?;
        out[t] = state.h;
    }
    Ok(out)
}

/// `[h_fwd_t ; h_bwd_t]` per position.
pub fn bilstm(g: &mut Graph<'_>, fwd: &LstmParams, bwd: &LstmParams, xs: &[Var], candidate: Activation) -> Result<Vec<Var>> {
    if xs.is_empty() {
        return Err(Error::invalid("bilstm over an empty sequence"));
    }
    let hf = run_lstm(g, fwd, xs, false, candidate)?;
    let hb = run_lstm(g, bwd, xs, true, candidate)?;
    hf.into_iter()
        .zip(hb)
        .map(|(a, b)| g.concat(&[a, b]))
        .collect()
}
