use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use super::lstm::{run_lstm, BiLstmParams};
use super::Activation;
use crate::embeddings::CharEncoding;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::rng::DetRng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharCnnParams {
    /// `(num_filters, window, input_dim)`.
    pub filters: ParamId,
    pub bias: ParamId,
    pub num_filters: usize,
    pub window: usize,
}

impl CharCnnParams {
    pub fn register(store: &mut ParamStore, prefix: &str, num_filters: usize, window: usize, input_dim: usize, rng: &mut DetRng) -> Result<Self> {
        let k = glorot_uniform(
            &[num_filters, window, input_dim],
            window * input_dim,
            num_filters,
            &mut rng.split_named(&format!("{prefix}.filters")),
        );
        Ok(CharCnnParams {
            filters: store.add(format!("{prefix}.filters"), k, true)?,
            bias: store.add(format!("{prefix}.bias"), Tensor::zeros(&[num_filters]), true)?,
            num_filters,
            window,
        })
    }
}

fn check_valid(enc: &CharEncoding) -> Result<()> {
    if enc.valid_length == 0 {
        return Err(Error::invalid("character encoding has no characters"));
    }
    Ok(())
}

/// Convolution over all `l` character rows (zero rows past the token),
/// tanh, then max-pooling over positions.
pub fn char_repr_cnn(g: &mut Graph<'_>, enc: &CharEncoding, params: &CharCnnParams, projection: Option<ParamId>) -> Result<Var> {
    check_valid(enc)?;
    let mut x = g.input(enc.matrix());
    if let Some(p) = projection {
        let p = g.param(p);
        x = g.matmul(x, p)?;
    }
    let k = g.param(params.filters);
    let b = g.param(params.bias);
    let conv = g.conv1d_same(x, k, b)?;
    let act = g.tanh(conv);
    g.max_pool_over_time(act)
}

/// Final forward state concatenated with the final backward state, reading
/// only the first `valid_length` rows.
pub fn char_repr_bilstm(
    g: &mut Graph<'_>,
    enc: &CharEncoding,
    params: &BiLstmParams,
    projection: Option<ParamId>,
    candidate: Activation,
) -> Result<Var> {
    check_valid(enc)?;
    let mut xs = Vec::with_capacity(enc.valid_length);
    match projection {
        Some(p) => {
            let p = g.param(p);
            for &idx in &enc.indices {
                xs.push(g.row(p, idx)?);
            }
        }
        None => {
            for row in 0..enc.valid_length {
                xs.push(g.input(enc.one_hot_row(row)));
            }
        }
    }
    let fwd = run_lstm(g, &params.fwd, &xs, false, candidate)?;
    let bwd = run_lstm(g, &params.bwd, &xs, true, candidate)?;
    g.concat(&[fwd[xs.len() - 1], bwd[0]])
}
