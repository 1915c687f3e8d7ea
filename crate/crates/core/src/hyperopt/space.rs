//! Search axes and the mapping from unit-cube points to training configs.

use serde::{Deserialize, Serialize};

use super::SearchError;
use crate::dataset::AugmentPolicy;
use crate::nn::LossKind;
use crate::optim::{OptimizerKind, ScheduleKind};
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log10,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AxisKind {
    Continuous { scale: Scale, low: f64, high: f64 },
    Categorical { choices: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    /// One of `lr`, `momentum`, `beta2`, `weight_decay`, `optimizer`, `loss`,
    /// `schedule`, `augment`.
    pub name: String,
    #[serde(flatten)]
    pub kind: AxisKind,
}

impl Axis {
    pub fn linear(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.into(),
            kind: AxisKind::Continuous {
                scale: Scale::Linear,
                low,
                high,
            },
        }
    }

    pub fn log10(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.into(),
            kind: AxisKind::Continuous {
                scale: Scale::Log10,
                low,
                high,
            },
        }
    }

    pub fn categorical(name: &str, choices: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: AxisKind::Categorical {
                choices: choices.iter().map(|c| c.to_string()).collect(),
            },
        }
    }

    pub fn value(&self, u: f64) -> AxisValue {
        match &self.kind {
            AxisKind::Continuous {
                scale: Scale::Linear,
                low,
                high,
            } => AxisValue::Real(low + u * (high - low)),
            AxisKind::Continuous {
                scale: Scale::Log10,
                low,
                high,
            } => {
                let (a, b) = (low.log10(), high.log10());
                AxisValue::Real(10f64.powf(a + u * (b - a)))
            }
            AxisKind::Categorical { choices } => {
                let i = ((u * choices.len() as f64).floor() as usize).min(choices.len() - 1);
                AxisValue::Choice(choices[i].clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValue {
    Real(f64),
    Choice(String),
}

impl std::fmt::Display for AxisValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AxisValue::Real(v) => write!(f, "{v}"),
            AxisValue::Choice(c) => f.write_str(c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub axes: Vec<Axis>,
}

const KNOWN_AXES: [&str; 8] = [
    "lr",
    "momentum",
    "beta2",
    "weight_decay",
    "optimizer",
    "loss",
    "schedule",
    "augment",
];

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            axes: vec![
                Axis::log10("lr", 1e-4, 3e-2),
                Axis::linear("momentum", 0.8, 0.95),
                Axis::log10("weight_decay", 1e-6, 1e-2),
                Axis::categorical("loss", &["mse", "smooth_l1"]),
                Axis::categorical("schedule", &["multi_step", "one_cycle", "cosine"]),
            ],
        }
    }
}

impl SearchSpace {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.axes.is_empty() || self.axes.len() > super::sobol::MAX_DIM {
            return Err(SearchError::SobolDimension(self.axes.len()));
        }
        let mut seen = std::collections::HashSet::new();
        for axis in &self.axes {
            if !KNOWN_AXES.contains(&axis.name.as_str()) {
                return Err(SearchError::Space(format!("unknown axis {}", axis.name)));
            }
            if !seen.insert(axis.name.as_str()) {
                return Err(SearchError::Space(format!("axis {} listed twice", axis.name)));
            }
            match &axis.kind {
                AxisKind::Continuous { scale, low, high } => {
                    if low.partial_cmp(high) != Some(std::cmp::Ordering::Less) {
                        return Err(SearchError::Space(format!("{}: need low < high", axis.name)));
                    }
                    if *scale == Scale::Log10 && *low <= 0.0 {
                        return Err(SearchError::Space(format!(
                            "{}: log axis needs positive bounds",
                            axis.name
                        )));
                    }
                }
                AxisKind::Categorical { choices } => {
                    if choices.is_empty() {
                        return Err(SearchError::Space(format!("{}: no choices", axis.name)));
                    }
                    for c in choices {
                        parse_choice(&axis.name, c)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Map a unit-cube point to named axis values.
    pub fn scale_point(&self, unit: &[f64]) -> Result<Vec<(String, AxisValue)>, SearchError> {
        if unit.len() != self.axes.len() {
            return Err(SearchError::Space(format!(
                "point has {} coordinates for {} axes",
                unit.len(),
                self.axes.len()
            )));
        }
        Ok(self
            .axes
            .iter()
            .zip(unit)
            .map(|(a, &u)| (a.name.clone(), a.value(u)))
            .collect())
    }
}

enum Parsed {
    Optimizer(OptimizerKind),
    Loss(LossKind),
    Schedule(ScheduleKind),
    Augment(AugmentPolicy),
}

fn parse_choice(axis: &str, choice: &str) -> Result<Parsed, SearchError> {
    let bad = || SearchError::Space(format!("{axis}: unknown choice {choice}"));
    Ok(match axis {
        "optimizer" => Parsed::Optimizer(match choice {
            "sgd" => OptimizerKind::Sgd,
            "adam" => OptimizerKind::Adam,
            "radam" => OptimizerKind::RAdam,
            "adamw" => OptimizerKind::AdamW,
            _ => return Err(bad()),
        }),
        "loss" => Parsed::Loss(match choice {
            "mse" => LossKind::Mse,
            "smooth_l1" => LossKind::SmoothL1,
            _ => return Err(bad()),
        }),
        "schedule" => Parsed::Schedule(match choice {
            "multi_step" => ScheduleKind::MultiStep,
            "one_cycle" => ScheduleKind::OneCycle,
            "cosine" => ScheduleKind::Cosine,
            _ => return Err(bad()),
        }),
        "augment" => Parsed::Augment(match choice {
            "none" => AugmentPolicy::IDENTITY,
            "light" => AugmentPolicy::LIGHT,
            "heavy" => AugmentPolicy::HEAVY,
            _ => return Err(bad()),
        }),
        _ => return Err(bad()),
    })
}

/// Overlay axis values on a base config. Choosing an optimizer resets its
/// adaptive-moment defaults before the numeric axes are applied.
pub fn apply(base: &TrainConfig, values: &[(String, AxisValue)]) -> Result<TrainConfig, SearchError> {
    let mut cfg = base.clone();
    for (name, value) in values {
        if let AxisValue::Choice(c) = value {
            match parse_choice(name, c)? {
                Parsed::Optimizer(kind) => {
                    cfg.optimizer.kind = kind;
                    if kind != OptimizerKind::Sgd {
                        cfg.optimizer.beta2 = 0.999;
                        cfg.optimizer.epsilon = 1e-8;
                    }
                }
                Parsed::Loss(l) => cfg.loss = l,
                Parsed::Schedule(s) => cfg.schedule = s,
                Parsed::Augment(a) => cfg.augment = a,
            }
        }
    }
    for (name, value) in values {
        if let AxisValue::Real(v) = *value {
            match name.as_str() {
                "lr" => cfg.optimizer.lr = v,
                "momentum" => cfg.optimizer.momentum = v,
                "beta2" => cfg.optimizer.beta2 = v,
                "weight_decay" => cfg.optimizer.weight_decay = v,
                other => return Err(SearchError::Space(format!("axis {other} is not numeric"))),
            }
        }
    }
    Ok(cfg)
}
