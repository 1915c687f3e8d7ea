//! Binary task decomposition, precision-recall curves, average precision and
//! recall-targeted operating points.
//!
//! The three-class problem is scored as two binary tasks: any fouling
//! (SLoF > 0) and heavy fouling (SLoF = 2). A score `s` predicts the positive
//! class at threshold `t` when `s >= t`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::NUM_CLASSES;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("label {0} is not a SLoF class")]
    InvalidLabel(u8),
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("{task}: undefined, {positives} positives and {negatives} negatives")]
    Undefined {
        task: &'static str,
        positives: usize,
        negatives: usize,
    },
    #[error("recall target {target} not reachable (max recall {max})")]
    UnreachableRecall { target: f64, max: f64 },
    #[error("recall target {0} outside (0, 1]")]
    InvalidTarget(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// SLoF = 0 versus SLoF > 0.
    AnyFouling,
    /// SLoF < 2 versus SLoF = 2.
    HeavyFouling,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::AnyFouling, Task::HeavyFouling];

    pub fn name(self) -> &'static str {
        match self {
            Task::AnyFouling => "SLoF>0",
            Task::HeavyFouling => "SLoF=2",
        }
    }

    /// Short id used in file names.
    pub fn slug(self) -> &'static str {
        match self {
            Task::AnyFouling => "any",
            Task::HeavyFouling => "heavy",
        }
    }
}

pub fn binarize(slof: u8, task: Task) -> Result<bool, EvalError> {
    if slof as usize >= NUM_CLASSES {
        return Err(EvalError::InvalidLabel(slof));
    }
    Ok(match task {
        Task::AnyFouling => slof > 0,
        Task::HeavyFouling => slof == 2,
    })
}

pub fn binarize_all(slof: &[u8], task: Task) -> Result<Vec<bool>, EvalError> {
    slof.iter().map(|&s| binarize(s, task)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// One point per distinct score, thresholds strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub positives: usize,
    pub negatives: usize,
}

/// Curve points with cumulative true positives, then the positive and
/// negative counts.
type Descending = (Vec<(PrPoint, usize)>, usize, usize);

/// Points in decreasing-threshold order; tied scores enter together.
fn descending_points(scores: &[f64], positives: &[bool]) -> Result<Descending, EvalError> {
    if scores.len() != positives.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: positives.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if positives[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let point = PrPoint {
            threshold: t,
            precision: tp as f64 / (tp + fp) as f64,
            recall: if n_pos == 0 { 0.0 } else { tp as f64 / n_pos as f64 },
        };
        points.push((point, tp));
    }
    Ok((points, n_pos, n_neg))
}

pub fn pr_curve(scores: &[f64], positives: &[bool]) -> Result<PrCurve, EvalError> {
    let (points, n_pos, n_neg) = descending_points(scores, positives)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::Undefined {
            task: "pr curve",
            positives: n_pos,
            negatives: n_neg,
        });
    }
    Ok(PrCurve {
        points: points.into_iter().rev().map(|(p, _)| p).collect(),
        positives: n_pos,
        negatives: n_neg,
    })
}

/// Step-interpolated AP: `sum_n (R_n - R_{n-1}) * P_n` over decreasing
/// thresholds, accumulated as `sum_n (TP_n - TP_{n-1}) * P_n / positives`.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Result<f64, EvalError> {
    let (points, n_pos, n_neg) = descending_points(scores, positives)?;
    if n_pos == 0 {
        return Err(EvalError::Undefined {
            task: "average precision",
            positives: 0,
            negatives: n_neg,
        });
    }
    let mut total = 0.0;
    let mut prev = 0;
    for (p, tp) in &points {
        total += (tp - prev) as f64 * p.precision;
        prev = *tp;
    }
    Ok(total / n_pos as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanAp {
    pub any_fouling: f64,
    pub heavy_fouling: f64,
    pub mean: f64,
}

/// Average of the two task APs.
pub fn mean_average_precision(scores: &[f64], slof: &[u8]) -> Result<MeanAp, EvalError> {
    let mut aps = [0.0; 2];
    for (ap, task) in aps.iter_mut().zip(Task::ALL) {
        let pos = binarize_all(slof, task)?;
        *ap = average_precision(scores, &pos).map_err(|e| match e {
            EvalError::Undefined {
                positives, negatives, ..
            } => EvalError::Undefined {
                task: task.name(),
                positives,
                negatives,
            },
            other => other,
        })?;
    }
    Ok(MeanAp {
        any_fouling: aps[0],
        heavy_fouling: aps[1],
        mean: 0.5 * (aps[0] + aps[1]),
    })
}

impl PrCurve {
    pub fn max_recall(&self) -> f64 {
        self.points.first().map_or(0.0, |p| p.recall)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.precision, p.recall));
        }
        out
    }
}

/// Largest threshold whose recall reaches `recall_target`.
pub fn select_threshold(curve: &PrCurve, recall_target: f64) -> Result<f64, EvalError> {
    if !(recall_target > 0.0 && recall_target <= 1.0) {
        return Err(EvalError::InvalidTarget(recall_target));
    }
    // Recall is non-increasing along ascending thresholds; among points with
    // equal recall the largest threshold also has the highest precision.
    curve
        .points
        .iter()
        .rev()
        .find(|p| p.recall >= recall_target)
        .map(|p| p.threshold)
        .ok_or(EvalError::UnreachableRecall {
            target: recall_target,
            max: curve.max_recall(),
        })
}

/// Precision and recall of the rule `score >= threshold`. Precision is
/// `None` when nothing is predicted positive, recall when there are no positives.
pub fn binary_metrics(scores: &[f64], positives: &[bool], threshold: f64) -> (Option<f64>, Option<f64>) {
    let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
    for (&s, &p) in scores.iter().zip(positives) {
        match (s >= threshold, p) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            _ => {}
        }
    }
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    (ratio(tp, fp), ratio(tp, fnn))
}

/// Thresholds for the two tasks, `any <= heavy`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoints {
    /// Floor score for SLoF >= 1.
    pub any_fouling: f64,
    /// Floor score for SLoF = 2.
    pub heavy_fouling: f64,
    pub recall_target: f64,
    /// The independently selected `any_fouling` threshold exceeded the heavy one.
    pub clamped: bool,
}

impl OperatingPoints {
    pub fn new(any_fouling: f64, heavy_fouling: f64, recall_target: f64) -> Self {
        let clamped = any_fouling > heavy_fouling;
        if clamped {
            log::warn!("any-fouling threshold {any_fouling} exceeds heavy-fouling threshold {heavy_fouling}; clamping");
        }
        Self {
            any_fouling: any_fouling.min(heavy_fouling),
            heavy_fouling,
            recall_target,
            clamped,
        }
    }

    /// Select both thresholds from pooled scores at one recall target.
    pub fn select(scores: &[f64], slof: &[u8], recall_target: f64) -> Result<Self, EvalError> {
        let mut t = [0.0; 2];
        for (slot, task) in t.iter_mut().zip(Task::ALL) {
            let curve = pr_curve(scores, &binarize_all(slof, task)?)?;
            *slot = select_threshold(&curve, recall_target)?;
        }
        Ok(Self::new(t[0], t[1], recall_target))
    }

    pub fn threshold(&self, task: Task) -> f64 {
        match task {
            Task::AnyFouling => self.any_fouling,
            Task::HeavyFouling => self.heavy_fouling,
        }
    }
}

pub fn classify(score: f64, points: &OperatingPoints) -> u8 {
    if score >= points.heavy_fouling {
        2
    } else if score >= points.any_fouling {
        1
    } else {
        0
    }
}

/// `counts[truth][predicted]`.
pub fn confusion_matrix(truth: &[u8], predicted: &[u8], n_classes: usize) -> Result<Vec<Vec<usize>>, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            scores: predicted.len(),
            labels: truth.len(),
        });
    }
    let mut m = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t as usize >= n_classes {
            return Err(EvalError::InvalidLabel(t));
        }
        if p as usize >= n_classes {
            return Err(EvalError::InvalidLabel(p));
        }
        m[t as usize][p as usize] += 1;
    }
    Ok(m)
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
