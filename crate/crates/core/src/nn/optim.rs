use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[serde(alias = "sgd")]
    SgdMomentum,
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::SgdMomentum => "sgd_momentum",
            OptimizerKind::Adam => "adam",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64, momentum: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::SgdMomentum,
            learning_rate,
            momentum,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate,
            ..Self::sgd(learning_rate, 0.9)
        }
    }

    pub fn default_for(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::SgdMomentum => Self::sgd(0.01, 0.9),
            OptimizerKind::Adam => Self::adam(1e-3),
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::default_for(OptimizerKind::SgdMomentum)
    }
}

/// Per-parameter moment buffers plus the step counter.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub config: OptimizerConfig,
    step: u64,
    /// Velocity (SGD) or first moment (Adam).
    first: Vec<Vec<T>>,
    /// Second moment (Adam only).
    second: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(config: OptimizerConfig) -> Self {
        OptimizerState {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[Option<&[T]>]) -> Result<()> {
        match self.config.kind {
            OptimizerKind::SgdMomentum => sgd_step(params, grads, self),
            OptimizerKind::Adam => adam_step(params, grads, self),
        }
    }

    fn prepare(&mut self, params: &[&mut [T]], grads: &[Option<&[T]>], adam: bool) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(
                "optimizer",
                format!("{} parameters but {} gradients", params.len(), grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let g = g.ok_or(Error::MissingGrad(i))?;
            if g.len() != p.len() {
                return Err(Error::shape(
                    "optimizer",
                    format!("parameter {i} has {} values, gradient {}", p.len(), g.len()),
                ));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            if adam {
                self.second = self.first.clone();
            }
        } else if self.first.len() != params.len()
            || self.first.iter().zip(params).any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::shape(
                "optimizer",
                "parameter set changed between steps",
            ));
        }
        Ok(())
    }
}

/// `v <- mu * v - lr * g; p <- p + v`
pub fn sgd_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[Option<&[T]>],
    state: &mut OptimizerState<T>,
) -> Result<()> {
    if state.config.kind != OptimizerKind::SgdMomentum {
        return Err(Error::Config("sgd_step called with a non-SGD state".into()));
    }
    state.prepare(params, grads, false)?;
    let lr = T::from_f64_lossy(state.config.learning_rate);
    let mu = T::from_f64_lossy(state.config.momentum);
    for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.first) {
        let g = g.expect("checked in prepare");
        for ((p, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *v = mu * *v - lr * g;
            *p = *p + *v;
        }
    }
    state.step += 1;
    Ok(())
}

/// Bias-corrected Adam update.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[Option<&[T]>],
    state: &mut OptimizerState<T>,
) -> Result<()> {
    if state.config.kind != OptimizerKind::Adam {
        return Err(Error::Config("adam_step called with a non-Adam state".into()));
    }
    state.prepare(params, grads, true)?;
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let lr = T::from_f64_lossy(c.learning_rate);
    let b1 = T::from_f64_lossy(c.beta1);
    let b2 = T::from_f64_lossy(c.beta2);
    let eps = T::from_f64_lossy(c.epsilon);
    let corr1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
    let corr2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
    let one = T::one();
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        let g = g.expect("checked in prepare");
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
