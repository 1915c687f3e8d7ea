use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::OptimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    MultiStep,
    OneCycle,
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleConfig {
    /// `base_lr * gamma^(number of milestones <= step)`.
    MultiStep {
        base_lr: f64,
        milestones: Vec<usize>,
        gamma: f64,
        total_steps: usize,
    },
    /// Cosine warm-up from `max_lr / final_div` to `max_lr` over the first
    /// `warmup_fraction` of training, then cosine anneal back to `max_lr / final_div`.
    OneCycle {
        max_lr: f64,
        warmup_fraction: f64,
        final_div: f64,
        total_steps: usize,
    },
    Cosine {
        base_lr: f64,
        lr_min: f64,
        t_max: usize,
        total_steps: usize,
    },
}

pub const ONE_CYCLE_WARMUP: f64 = 0.3;
pub const ONE_CYCLE_FINAL_DIV: f64 = 1e4;

impl ScheduleConfig {
    /// Training defaults: multi-step decays by 10x at 50% and 75% of training,
    /// cosine anneals to `base_lr / 1000` over the whole run.
    pub fn standard(kind: ScheduleKind, base_lr: f64, total_steps: usize) -> Self {
        match kind {
            ScheduleKind::MultiStep => ScheduleConfig::MultiStep {
                base_lr,
                milestones: vec![total_steps / 2, total_steps * 3 / 4],
                gamma: 0.1,
                total_steps,
            },
            ScheduleKind::OneCycle => ScheduleConfig::OneCycle {
                max_lr: base_lr,
                warmup_fraction: ONE_CYCLE_WARMUP,
                final_div: ONE_CYCLE_FINAL_DIV,
                total_steps,
            },
            ScheduleKind::Cosine => ScheduleConfig::Cosine {
                base_lr,
                lr_min: base_lr * 1e-3,
                t_max: total_steps.saturating_sub(1),
                total_steps,
            },
        }
    }

    pub fn total_steps(&self) -> usize {
        match *self {
            ScheduleConfig::MultiStep { total_steps, .. }
            | ScheduleConfig::OneCycle { total_steps, .. }
            | ScheduleConfig::Cosine { total_steps, .. } => total_steps,
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: &str| Err(OptimError::Invalid(m.into()));
        if self.total_steps() == 0 {
            return bad("schedule needs at least one step");
        }
        match self {
            ScheduleConfig::MultiStep { base_lr, gamma, .. } => {
                if !(*base_lr > 0.0 && *gamma > 0.0) {
                    return bad("multi-step needs positive base_lr and gamma");
                }
            }
            ScheduleConfig::OneCycle {
                max_lr,
                warmup_fraction,
                final_div,
                ..
            } => {
                if !(*max_lr > 0.0 && (0.0..=1.0).contains(warmup_fraction) && *final_div >= 1.0) {
                    return bad("one-cycle needs max_lr > 0, warmup in [0, 1], final_div >= 1");
                }
            }
            ScheduleConfig::Cosine { base_lr, lr_min, .. } => {
                if !(*lr_min > 0.0 && base_lr >= lr_min) {
                    return bad("cosine needs 0 < lr_min <= base_lr");
                }
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> Result<f64, OptimError> {
        let total = self.total_steps();
        if step >= total {
            return Err(OptimError::StepOutOfRange { step, total });
        }
        Ok(match self {
            ScheduleConfig::MultiStep {
                base_lr,
                milestones,
                gamma,
                ..
            } => {
                let passed = milestones.iter().filter(|&&m| m <= step).count();
                base_lr * gamma.powi(passed as i32)
            }
            ScheduleConfig::OneCycle {
                max_lr,
                warmup_fraction,
                final_div,
                ..
            } => {
                let floor = max_lr / final_div;
                let last = (total - 1) as f64;
                let peak = (warmup_fraction * last).round() as usize;
                let rising = |f: f64| floor + (max_lr - floor) * 0.5 * (1.0 - (PI * f).cos());
                if step <= peak {
                    rising(if peak == 0 { 1.0 } else { step as f64 / peak as f64 })
                } else {
                    let f = (step - peak) as f64 / (total - 1 - peak) as f64;
                    floor + (max_lr - floor) * 0.5 * (1.0 + (PI * f).cos())
                }
            }
            ScheduleConfig::Cosine {
                base_lr, lr_min, t_max, ..
            } => {
                let t = step.min(*t_max) as f64;
                let phase = if *t_max == 0 { 0.0 } else { t / *t_max as f64 };
                lr_min + 0.5 * (base_lr - lr_min) * (1.0 + (PI * phase).cos())
            }
        })
    }
}
