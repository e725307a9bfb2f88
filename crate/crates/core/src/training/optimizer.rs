//! SGD (Nesterov momentum), RMSProp and Adam with per-step learning-rate decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "SGD", alias = "sgd")]
    Sgd,
    #[serde(rename = "RMSP", alias = "rmsp", alias = "rmsprop", alias = "RMSProp")]
    Rmsprop,
    #[serde(rename = "ADAM", alias = "adam", alias = "Adam")]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Effective rate is `learning_rate / (1 + decay * t)` at update `t`.
    pub decay: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub rho: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-4,
            decay: 1e-5,
            momentum: 0.9,
            nesterov: true,
            rho: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!("optimizer.learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.decay.is_nan() || self.decay < 0.0 {
            return Err(Error::Config(format!("optimizer.decay must be non-negative, got {}", self.decay)));
        }
        for (name, v) in [("momentum", self.momentum), ("rho", self.rho), ("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("optimizer.{name} must be in [0, 1), got {v}")));
            }
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("optimizer.epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_lr(&self, step_index: u64) -> f64 {
        self.learning_rate / (1.0 + self.decay * step_index as f64)
    }
}

/// Accumulators for one parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Slot {
    /// SGD velocity, or Adam first moment.
    pub first: Vec<f64>,
    /// RMSProp/Adam second moment.
    pub second: Vec<f64>,
}

impl Slot {
    pub fn new(n: usize) -> Self {
        Slot {
            first: vec![0.0; n],
            second: vec![0.0; n],
        }
    }
}

/// Applies one update to `value` in place. `step_index` counts prior updates.
pub fn update(cfg: &OptimizerConfig, value: &mut [f64], grad: &[f64], slot: &mut Slot, step_index: u64) {
    let lr = cfg.effective_lr(step_index);
    match cfg.kind {
        OptimizerKind::Sgd => {
            let mu = cfg.momentum;
            for ((w, g), v) in value.iter_mut().zip(grad).zip(&mut slot.first) {
                *v = mu * *v - lr * g;
                *w += if cfg.nesterov { mu * *v - lr * g } else { *v };
            }
        }
        OptimizerKind::Rmsprop => {
            let rho = cfg.rho;
            for ((w, g), a) in value.iter_mut().zip(grad).zip(&mut slot.second) {
                *a = rho * *a + (1.0 - rho) * g * g;
                *w -= lr * g / (a.sqrt() + cfg.epsilon);
            }
        }
        OptimizerKind::Adam => {
            let t = (step_index + 1) as i32;
            let c1 = 1.0 - cfg.beta1.powi(t);
            let c2 = 1.0 - cfg.beta2.powi(t);
            for (((w, g), m), v) in value.iter_mut().zip(grad).zip(&mut slot.first).zip(&mut slot.second) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }
}

pub struct Optimizer {
    pub config: OptimizerConfig,
    slots: Vec<Slot>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let slots = store.iter().map(|(_, p)| Slot::new(p.value.len())).collect();
        Ok(Optimizer {
            config,
            slots,
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Updates every trainable parameter from its accumulated gradient.
    /// Refuses to move anything if a gradient is not finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if let Some(p) = store.iter().find(|(_, p)| p.trainable && !p.grad.all_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient in {} at update {}",
                p.1.name, self.steps
            )));
        }
        for (p, slot) in store.iter_mut().zip(&mut self.slots) {
            if !p.trainable {
                continue;
            }
            let grad = p.grad.data().to_vec();
            update(&self.config, p.value.data_mut(), &grad, slot, self.steps);
        }
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn cfg(kind: OptimizerKind) -> OptimizerConfig {
        OptimizerConfig {
            kind,
            learning_rate: 0.01,
            decay: 0.0,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn nesterov_first_step() {
        let c = cfg(OptimizerKind::Sgd);
        let mut w = [1.0, -2.0];
        let g = [0.5, -1.5];
        let mut slot = Slot::new(2);
        update(&c, &mut w, &g, &mut slot, 0);
        // v = -lr g; Δw = μv - lr g = -lr (1 + μ) g
        for i in 0..2 {
            let orig = [1.0, -2.0][i];
            let expect = orig - 0.01 * 1.9 * g[i];
            assert!((w[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_constant_gradient_step_is_lr() {
        let c = cfg(OptimizerKind::Adam);
        let mut w = [0.0];
        let mut slot = Slot::new(1);
        for t in 0..50 {
            let before = w[0];
            update(&c, &mut w, &[3.0], &mut slot, t);
            let step = before - w[0];
            assert!((step - 0.01).abs() < 1e-9, "t={t} step={step}");
        }
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_state() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Rmsprop, OptimizerKind::Adam] {
            let c = cfg(kind);
            let mut w = [0.7];
            let mut slot = Slot::new(1);
            update(&c, &mut w, &[0.0], &mut slot, 0);
            assert_eq!(w, [0.7], "{kind:?}");
        }
        let c = cfg(OptimizerKind::Adam);
        let mut slot = Slot {
            first: vec![0.4],
            second: vec![0.2],
        };
        let mut w = [0.0];
        update(&c, &mut w, &[0.0], &mut slot, 3);
        assert!((slot.first[0] - 0.36).abs() < 1e-15);
        assert!((slot.second[0] - 0.2 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn one_step_decreases_quadratic() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Rmsprop, OptimizerKind::Adam] {
            let c = cfg(kind);
            for w0 in [-3.0, -0.2, 0.5, 4.0] {
                let mut w = [w0];
                let mut slot = Slot::new(1);
                update(&c, &mut w, &[w0], &mut slot, 0);
                assert!(0.5 * w[0] * w[0] < 0.5 * w0 * w0, "{kind:?} from {w0}");
            }
        }
    }

    #[test]
    fn learning_rate_decay() {
        let c = OptimizerConfig {
            learning_rate: 1e-4,
            decay: 1e-5,
            ..OptimizerConfig::default()
        };
        assert_eq!(c.effective_lr(0), 1e-4);
        assert!((c.effective_lr(100_000) - 5e-5).abs() < 1e-18);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![1.0]), true).unwrap();
        store.get_mut(id).grad = Tensor::vector(vec![f64::NAN]);
        let mut opt = Optimizer::new(OptimizerConfig::default(), &store).unwrap();
        assert!(matches!(opt.step(&mut store), Err(Error::Numeric(_))));
        assert_eq!(store.value(id).data(), &[1.0]);
    }
}
