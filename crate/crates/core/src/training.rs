//! Mini-batch training of the scalar regressor.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{augment, AugmentPolicy, RgbImage, NUM_CLASSES};
use crate::nn::{class_weights, loss_and_grad, LossConfig, LossKind, NetworkSpec, NetworkState};
use crate::optim::{Objective, Optimizer, OptimizerConfig, OptimizerKind, ScheduleConfig, ScheduleKind};
use crate::rng::{self, tag};

/// Every component of a training run that the search can vary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub schedule: ScheduleKind,
    pub loss: LossKind,
    pub augment: AugmentPolicy,
    pub batch_size: usize,
    /// Weight the loss by inverse class frequency.
    pub class_weighted: bool,
}

impl Default for TrainConfig {
    /// The untuned baseline: SGD with momentum, smooth-L1, multi-step decay,
    /// batch size 64.
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::sgd(0.01, 0.9),
            schedule: ScheduleKind::MultiStep,
            loss: LossKind::SmoothL1,
            augment: AugmentPolicy::LIGHT,
            batch_size: 64,
            class_weighted: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> crate::Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(crate::Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn loss_config(&self, labels: &[u8]) -> crate::Result<LossConfig> {
        let class_weights = if self.class_weighted {
            let mut counts = [0usize; NUM_CLASSES];
            for &l in labels {
                counts[l as usize] += 1;
            }
            class_weights(counts)?
        } else {
            [1.0; NUM_CLASSES]
        };
        Ok(LossConfig {
            kind: self.loss,
            class_weights,
        })
    }
}

/// Training stopped because the loss or the parameters stopped being finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Diverged {
    pub epoch: usize,
    pub step: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: NetworkState,
    /// Mean training loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Train a freshly initialised network. `Ok(Err(_))` reports divergence,
/// which search treats as a failed trial rather than an error.
pub fn train_model(
    spec: &NetworkSpec,
    config: &TrainConfig,
    images: &[&RgbImage],
    labels: &[u8],
    epochs: usize,
    seed: u64,
) -> crate::Result<Result<TrainOutcome, Diverged>> {
    config.validate()?;
    if images.len() != labels.len() || images.is_empty() {
        return Err(crate::Error::Config(format!(
            "{} images with {} labels",
            images.len(),
            labels.len()
        )));
    }
    let mut state = NetworkState::init(spec.clone(), rng::derive_seed(seed, &[tag::INIT]))?;
    let loss_cfg = config.loss_config(labels)?;
    let mut opt = Optimizer::new(config.optimizer, state.params().len())?;
    let per_epoch = steps_per_epoch(images.len(), config.batch_size);
    let schedule = ScheduleConfig::standard(config.schedule, config.optimizer.lr, (per_epoch * epochs).max(1));
    schedule.validate()?;

    // Without augmentation the tensors never change.
    let fixed: Option<Vec<Vec<f64>>> = config
        .augment
        .is_identity()
        .then(|| images.iter().map(|img| img.to_tensor()).collect());

    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut epoch_losses = Vec::with_capacity(epochs);
    let mut step = 0usize;
    for epoch in 0..epochs {
        order.shuffle(&mut rng::stream(seed, &[tag::SHUFFLE, epoch as u64]));
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let owned: Vec<Vec<f64>>;
            let inputs: Vec<&[f64]> = match &fixed {
                Some(t) => batch.iter().map(|&i| t[i].as_slice()).collect(),
                None => {
                    owned = batch
                        .iter()
                        .map(|&i| {
                            let s = rng::derive_seed(seed, &[tag::AUGMENT, epoch as u64, i as u64]);
                            augment(images[i], s, &config.augment).to_tensor()
                        })
                        .collect();
                    owned.iter().map(|v| v.as_slice()).collect()
                }
            };
            let batch_labels: Vec<u8> = batch.iter().map(|&i| labels[i]).collect();
            let (scores, cache) = state.forward(&inputs)?;
            let (loss, dscores) = loss_and_grad(&scores, &batch_labels, &loss_cfg)?;
            if !loss.is_finite() {
                return Ok(Err(Diverged { epoch, step }));
            }
            let grad = state.backward(&cache, &dscores)?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Ok(Err(Diverged { epoch, step }));
            }
            let lr = schedule.lr_at(step)?;
            opt.step_with_lr(state.params_mut(), &grad, lr)?;
            if state.params().iter().any(|p| !p.is_finite()) {
                return Ok(Err(Diverged { epoch, step }));
            }
            total += loss * batch.len() as f64;
            step += 1;
        }
        epoch_losses.push(total / images.len() as f64);
    }
    Ok(Ok(TrainOutcome { state, epoch_losses }))
}

/// Raw scores for un-augmented images.
pub fn score_images(state: &NetworkState, images: &[&RgbImage]) -> crate::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(256) {
        let tensors: Vec<Vec<f64>> = chunk.iter().map(|img| img.to_tensor()).collect();
        let refs: Vec<&[f64]> = tensors.iter().map(|v| v.as_slice()).collect();
        out.extend(state.predict(&refs)?);
    }
    Ok(out)
}

/// Network loss over cycling mini-batches, for the learning-rate range test.
pub struct NetworkObjective {
    state: NetworkState,
    tensors: Vec<Vec<f64>>,
    labels: Vec<u8>,
    loss: LossConfig,
    order: Vec<usize>,
    batch_size: usize,
}

impl NetworkObjective {
    pub fn new(
        state: NetworkState,
        images: &[&RgbImage],
        labels: &[u8],
        config: &TrainConfig,
        seed: u64,
    ) -> crate::Result<Self> {
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(&mut rng::stream(seed, &[tag::RANGE_TEST]));
        Ok(Self {
            state,
            tensors: images.iter().map(|i| i.to_tensor()).collect(),
            labels: labels.to_vec(),
            loss: config.loss_config(labels)?,
            order,
            batch_size: config.batch_size,
        })
    }

    pub fn initial_params(&self) -> Vec<f64> {
        self.state.params().to_vec()
    }
}

impl Objective for NetworkObjective {
    fn loss_and_grad(&mut self, params: &[f64], iteration: usize) -> crate::Result<(f64, Vec<f64>)> {
        self.state.params_mut().copy_from_slice(params);
        let n = self.order.len();
        let start = (iteration * self.batch_size) % n;
        let batch: Vec<usize> = (0..self.batch_size.min(n))
            .map(|k| self.order[(start + k) % n])
            .collect();
        let inputs: Vec<&[f64]> = batch.iter().map(|&i| self.tensors[i].as_slice()).collect();
        let labels: Vec<u8> = batch.iter().map(|&i| self.labels[i]).collect();
        let (scores, cache) = self.state.forward(&inputs)?;
        let (loss, dscores) = loss_and_grad(&scores, &labels, &self.loss)?;
        let grad = self.state.backward(&cache, &dscores)?;
        Ok((loss, grad))
    }
}

/// Default optimizer settings used for a given optimizer kind in the search.
pub fn optimizer_for(kind: OptimizerKind, lr: f64, momentum: f64, weight_decay: f64) -> OptimizerConfig {
    let mut cfg = match kind {
        OptimizerKind::Sgd => OptimizerConfig::sgd(lr, momentum),
        other => OptimizerConfig::adam_like(other, lr),
    };
    cfg.momentum = momentum;
    cfg.weight_decay = weight_decay;
    cfg
}
