use serde::{Deserialize, Serialize};

use super::OptimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    RAdam,
    AdamW,
}

/// `momentum` doubles as Adam's beta1. `weight_decay` is an L2 term on the
/// gradient for SGD/Adam/RAdam and a decoupled parameter decay for AdamW.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64, momentum: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            momentum,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn adam_like(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            momentum: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: &str| Err(OptimError::Invalid(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum/beta1 must lie in [0, 1)");
        }
        if self.kind != OptimizerKind::Sgd {
            if !(0.0..1.0).contains(&self.beta2) {
                return bad("beta2 must lie in [0, 1)");
            }
            if self.epsilon.is_nan() || self.epsilon <= 0.0 {
                return bad("epsilon must be positive");
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be nonnegative");
        }
        Ok(())
    }
}

/// Rectification is applied only once the SMA length exceeds this.
const RADAM_SMA_THRESHOLD: f64 = 5.0;

/// Optimizer with its moment buffers.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, n_params: usize) -> Result<Self, OptimError> {
        config.validate()?;
        Ok(Self {
            config,
            first: vec![0.0; n_params],
            second: vec![0.0; n_params],
            step: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Apply one update at the configured learning rate.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), OptimError> {
        self.step_with_lr(params, grads, self.config.lr)
    }

    /// Apply one update with an explicit (scheduled) learning rate.
    pub fn step_with_lr(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), OptimError> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(OptimError::LengthMismatch {
                params: params.len(),
                grads: grads.len(),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteGradient(i));
        }
        self.step += 1;
        let t = self.step as f64;
        let OptimizerConfig {
            kind,
            momentum: beta1,
            beta2,
            epsilon,
            weight_decay,
            ..
        } = self.config;
        let coupled_decay = if kind == OptimizerKind::AdamW {
            0.0
        } else {
            weight_decay
        };

        match kind {
            OptimizerKind::Sgd => {
                for ((p, &g), buf) in params.iter_mut().zip(grads).zip(&mut self.first) {
                    let g = g + coupled_decay * *p;
                    *buf = if self.step == 1 { g } else { beta1 * *buf + g };
                    *p -= lr * *buf;
                }
            }
            OptimizerKind::Adam | OptimizerKind::AdamW => {
                let bc1 = 1.0 - beta1.powf(t);
                let bc2 = 1.0 - beta2.powf(t);
                for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
                    if kind == OptimizerKind::AdamW {
                        *p -= lr * weight_decay * *p;
                    }
                    let g = g + coupled_decay * *p;
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
            OptimizerKind::RAdam => {
                let bc1 = 1.0 - beta1.powf(t);
                let beta2_t = beta2.powf(t);
                let bc2 = 1.0 - beta2_t;
                let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
                let rho_t = rho_inf - 2.0 * t * beta2_t / bc2;
                let rect = (rho_t > RADAM_SMA_THRESHOLD).then(|| {
                    ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt()
                });
                for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
                    let g = g + coupled_decay * *p;
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    match rect {
                        Some(r) => {
                            let v_hat = (*v / bc2).sqrt();
                            *p -= lr * r * m_hat / (v_hat + epsilon);
                        }
                        // Variance not yet tractable: plain momentum step.
                        None => *p -= lr * m_hat,
                    }
                }
            }
        }
        Ok(())
    }
}
