//! Tensor arithmetic, reverse-mode differentiation, and the numeric helpers
//! the network and trainer share.

mod graph;
pub mod gradcheck;
mod params;
mod tensor;

pub use graph::{sigmoid, Graph, Var};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

use crate::error::{Error, Result};
use crate::rng::DetRng;

/// `ln Σ exp(v_i)` evaluated with a max shift.
pub fn log_sum_exp_slice(v: &[f64]) -> Result<f64> {
    let max = v
        .iter()
        .copied()
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
        .ok_or_else(|| Error::invalid("log_sum_exp of an empty vector"))?;
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let s: f64 = v.iter().map(|x| (x - max).exp()).sum();
    Ok(max + s.ln())
}

pub fn log_sum_exp(v: &Tensor) -> Result<f64> {
    log_sum_exp_slice(v.data())
}

/// Scales every tensor by `threshold / norm` when their joint L2 norm exceeds
/// `threshold`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut Tensor], threshold: f64) -> Result<f64> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::invalid(format!("clip threshold must be positive, got {threshold}")));
    }
    let norm = grads.iter().map(|g| g.norm_sq()).sum::<f64>().sqrt();
    if norm > threshold {
        let k = threshold / norm;
        for g in grads.iter_mut() {
            g.scale(k);
        }
    }
    Ok(norm)
}

/// Clips the accumulated gradients of all trainable parameters in place.
pub fn clip_store_grads(store: &mut ParamStore, threshold: f64) -> Result<f64> {
    let mut grads: Vec<&mut Tensor> = store
        .iter_mut()
        .filter(|p| p.trainable)
        .map(|p| &mut p.grad)
        .collect();
    clip_global_norm(&mut grads, threshold)
}

/// Inverted-dropout keep mask: entries are `0` or `1/(1-rate)`.
pub fn dropout_mask(shape: &[usize], rate: f64, rng: &mut DetRng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    let keep = 1.0 / (1.0 - rate);
    let mut m = Tensor::zeros(shape);
    for v in m.data_mut() {
        *v = if rng.uniform() >= rate { keep } else { 0.0 };
    }
    Ok(m)
}

/// Identity at inference time or at rate 0; otherwise multiplies by a fresh
/// inverted-dropout mask.
pub fn dropout(g: &mut Graph<'_>, x: Var, rate: f64, training: bool, rng: &mut DetRng) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok(x);
    }
    let mask = dropout_mask(g.value(x).shape(), rate, rng)?;
    g.mul_const(x, mask)
}
